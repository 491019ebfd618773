import numpy as np
from sklearn.utils import check_array


def check_feature_matrix(X, min_samples: int = 1) -> np.ndarray:
    """2-d finite float array with at least ``min_samples`` rows and 2 columns."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples, ensure_min_features=2)
    return X
