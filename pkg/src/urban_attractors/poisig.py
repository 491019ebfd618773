"""Fisher's exact test relating POI types to attractor classes."""
from __future__ import annotations

import csv
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from fractions import Fraction

from .exceptions import DataValidationError
from .ingest import POITable

SIGNIFICANCE_COLUMNS = ("attractor_class", "poi_type", "a", "expected_a", "p_value", "p_bonferroni")


class LogFactorialTable:
    """Grow-on-demand table of ``log(k!)``."""

    def __init__(self, n: int = 1024):
        self._values = [0.0]
        self.extend(n)

    def extend(self, n: int) -> None:
        for k in range(len(self._values), n + 1):
            self._values.append(math.lgamma(k + 1))

    def __call__(self, k: int) -> float:
        if k >= len(self._values):
            self.extend(max(k, 2 * len(self._values)))
        return self._values[k]


_LOG_FACT = LogFactorialTable()


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 counts: ``a`` type-t POIs in the class, ``b`` type-t outside, ``c`` other types in, ``d`` other types out."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"count {name} must be a non-negative integer, got {v!r}")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def expected_a(self) -> float:
        return (self.a + self.b) * (self.a + self.c) / self.n if self.n else 0.0


def _log_point(a: int, b: int, c: int, d: int) -> float:
    lf = _LOG_FACT
    return (lf(a + b) + lf(c + d) + lf(a + c) + lf(b + d)
            - lf(a) - lf(b) - lf(c) - lf(d) - lf(a + b + c + d))


def fet_point_probability(t: ContingencyTable) -> float:
    """Hypergeometric probability of exactly this table given its margins."""
    return min(1.0, math.exp(_log_point(t.a, t.b, t.c, t.d)))


def fet_log_one_sided(t: ContingencyTable) -> float:
    """Natural log of the upper-tail p-value, usable past float underflow."""
    a, b, c, d = t.a, t.b, t.c, t.d
    hi = min(a + b, a + c)
    # successive terms of the upper tail satisfy
    #   P(x + 1) / P(x) = (b' c') / ((x + 1)(d' + 1)) with b' = a+b-x, c' = a+c-x, d' = d - a + x
    term = 1.0
    acc = 1.0
    x = a
    bb, cc, dd = b, c, d
    while x < hi:
        term *= (bb * cc) / ((x + 1) * (dd + 1))
        x += 1
        bb -= 1
        cc -= 1
        dd += 1
        acc += term
        if term < acc * 1e-17:
            break
    return min(0.0, _log_point(a, b, c, d) + math.log(acc))


def fet_one_sided(t: ContingencyTable) -> float:
    """P(X >= a) under the hypergeometric null with the table's margins fixed."""
    return math.exp(fet_log_one_sided(t))


def fet_one_sided_exact(t: ContingencyTable) -> Fraction:
    """Upper-tail p-value as an exact rational (big-integer binomials)."""
    r1, c1, n = t.a + t.b, t.a + t.c, t.n
    num = sum(math.comb(r1, x) * math.comb(n - r1, c1 - x) for x in range(t.a, min(r1, c1) + 1))
    return Fraction(num, math.comb(n, c1))


def _class_members(assignment: Mapping[str, str], cls: str) -> set[str]:
    return {z for z, lab in assignment.items() if lab == cls}


def build_table(pois: POITable, assignment: Mapping[str, str], cls: str, poi_type: str) -> ContingencyTable:
    """Contingency table for POI type ``poi_type`` against the union of zones labelled ``cls``.

    ``assignment`` maps zone id to class name; POIs outside every zone are ignored.
    """
    if cls not in set(assignment.values()):
        raise DataValidationError(f"unknown attractor class {cls!r}")
    if poi_type not in set(pois.vocabulary):
        raise DataValidationError(f"unknown POI type {poi_type!r}")
    a = b = c = d = 0
    for r in pois.assigned:
        inside = assignment.get(r.zone_id) == cls
        if r.poi_type == poi_type:
            a, b = (a + 1, b) if inside else (a, b + 1)
        else:
            c, d = (c + 1, d) if inside else (c, d + 1)
    return ContingencyTable(a, b, c, d)


@dataclass(frozen=True)
class RankedType:
    poi_type: str
    a: int
    expected_a: float
    p_value: float
    log_p: float


@dataclass(frozen=True)
class SignificanceRanking:
    attractor_class: str
    rows: tuple[RankedType, ...]


def rank_types(pois: POITable, assignment: Mapping[str, str], cls: str) -> SignificanceRanking:
    """POI types present in class ``cls`` ordered by ascending one-sided p-value (ties by type name)."""
    records = pois.assigned
    if not records:
        raise DataValidationError("no POI falls inside a zone")
    members = _class_members(assignment, cls)
    type_total = Counter(r.poi_type for r in records)
    type_in = Counter(r.poi_type for r in records if r.zone_id in members)
    n = len(records)
    n_in = sum(type_in.values())
    rows = []
    for t in sorted(type_total):
        a = type_in.get(t, 0)
        if a == 0:
            continue
        b = type_total[t] - a
        c = n_in - a
        d = n - a - b - c
        table = ContingencyTable(a, b, c, d)
        lp = fet_log_one_sided(table)
        rows.append(RankedType(t, a, table.expected_a, math.exp(lp), lp))
    rows.sort(key=lambda r: (r.log_p, r.poi_type))
    return SignificanceRanking(cls, tuple(rows))


def rank_all(pois: POITable, assignment: Mapping[str, str], classes: Iterable[str] | None = None) -> list[SignificanceRanking]:
    if classes is None:
        classes = sorted(set(assignment.values()))
    return [rank_types(pois, assignment, c) for c in classes]


def write_significance(path, rankings: Iterable[SignificanceRanking]) -> None:
    """CSV sorted by class then p-value; Bonferroni factor is the total number of tests written."""
    rankings = sorted(rankings, key=lambda r: r.attractor_class)
    m = sum(len(r.rows) for r in rankings)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIGNIFICANCE_COLUMNS)
        for rk in rankings:
            for row in rk.rows:
                w.writerow([
                    rk.attractor_class,
                    row.poi_type,
                    row.a,
                    repr(row.expected_a),
                    repr(row.p_value),
                    repr(min(1.0, row.p_value * m)),
                ])
