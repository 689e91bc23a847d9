"""
Adjusted Leibovich score.

Additive clinical point score over pathologic T-stage, nodal status, tumor
size and nuclear grade. The necrosis component of the full score is omitted.
Point assignments are data: they are read from a CSV table

    component,level,points
    t_stage,T1a,0
    ...
    size_threshold_cm,,10

so reports can print and hash the exact table used.
"""
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Tuple, Union
import hashlib

import numpy as np
import pandas as pd

from ..errors import FileFormatError, MissingFileError, NoCompleteFeaturesError, UnknownLevelError
from ..utils.logging import get_logger

if TYPE_CHECKING:
    from .cohort_io import Cohort


logger = get_logger("Leibovich")

DEFAULT_TABLE_PATH = Path(__file__).parent.parent / "data" / "leibovich_points.csv"

COMPONENTS = ("t_stage", "n_stage", "size", "grade")
SIZE_BELOW = "lt_threshold"
SIZE_AT_OR_ABOVE = "ge_threshold"


class TStage(str, Enum):
    T1a = "T1a"
    T1b = "T1b"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"


class NStage(str, Enum):
    N0 = "N0"
    Nx = "Nx"
    N1plus = "N1plus"


def parse_t_stage(text: str) -> TStage:
    """Map pathology notation to a T-stage level (T2a -> T2, pT3b -> T3)."""
    t = str(text).strip()
    if t[:1].lower() == "p":
        t = t[1:]
    t = t.upper()
    if t in ("T1A", "T1B"):
        return TStage(t[:2] + t[2].lower())
    if t[:2] in ("T2", "T3", "T4"):
        return TStage(t[:2])
    raise UnknownLevelError(f"unknown T-stage {text!r}")


def parse_n_stage(text: str) -> NStage:
    n = str(text).strip()
    if n[:1].lower() == "p":
        n = n[1:]
    n = n.upper()
    if n == "N0":
        return NStage.N0
    if n == "NX":
        return NStage.Nx
    if n in ("N1", "N2", "N1PLUS", "N+"):
        return NStage.N1plus
    raise UnknownLevelError(f"unknown N-stage {text!r}")


GRADES = (1, 2, 3, 4)


def parse_grade(text) -> int:
    """Nuclear grade from text. Accepts "3" or "3.0"; rejects 3.7, inf and 5."""
    try:
        value = float(str(text).strip())
    except ValueError:
        raise ValueError(f"grade must be an integer in 1-4, got {text!r}") from None
    if not value.is_integer() or int(value) not in GRADES:
        raise ValueError(f"grade must be an integer in 1-4, got {text!r}")
    return int(value)


@dataclass(frozen=True)
class LeibovichFeatures:
    t_stage: TStage
    n_stage: NStage
    tumor_size_cm: float
    grade: int

    def __post_init__(self):
        if not (np.isfinite(self.tumor_size_cm) and self.tumor_size_cm > 0):
            raise ValueError(f"tumor_size_cm must be positive, got {self.tumor_size_cm}")
        if isinstance(self.grade, bool) or int(self.grade) != self.grade:
            raise ValueError(f"grade must be an integer, got {self.grade!r}")

    @classmethod
    def from_strings(cls, t_stage: str, n_stage: str, tumor_size_cm, grade) -> "LeibovichFeatures":
        """Parse manifest text. Raises ``ValueError`` for any grade outside 1-4."""
        return cls(
            t_stage=parse_t_stage(t_stage),
            n_stage=parse_n_stage(n_stage),
            tumor_size_cm=float(tumor_size_cm),
            grade=parse_grade(grade),
        )

    def to_strings(self) -> Dict[str, str]:
        return {
            "t_stage": self.t_stage.value,
            "n_stage": self.n_stage.value,
            "tumor_size_cm": repr(float(self.tumor_size_cm)),
            "grade": str(int(self.grade)),
        }


@dataclass(frozen=True)
class PointTable:
    points: Mapping[Tuple[str, str], int]
    size_threshold_cm: float
    source: str = "<memory>"
    sha256: str = ""

    def __post_init__(self):
        if self.size_threshold_cm <= 0:
            raise ValueError("size_threshold_cm must be positive")
        if any(p < 0 for p in self.points.values()):
            raise ValueError("point assignments must be nonnegative")

    def lookup(self, component: str, level: str) -> int:
        try:
            return self.points[(component, level)]
        except KeyError:
            raise UnknownLevelError(f"no points for {component}={level!r} in table {self.source}") from None

    def component_max(self, component: str) -> int:
        return max(p for (c, _), p in self.points.items() if c == component)

    @property
    def max_score(self) -> int:
        return sum(self.component_max(c) for c in COMPONENTS)

    def levels(self, component: str) -> List[str]:
        return [lvl for (c, lvl) in self.points if c == component]

    def as_rows(self) -> List[Dict[str, object]]:
        rows = [{"component": c, "level": lvl, "points": p} for (c, lvl), p in self.points.items()]
        rows.append({"component": "size_threshold_cm", "level": "", "points": self.size_threshold_cm})
        return rows


def load_point_table(path: Union[str, Path, None] = None) -> PointTable:
    """Load a point table CSV (``component,level,points`` + threshold row)."""
    path = Path(path) if path is not None else DEFAULT_TABLE_PATH
    if not path.exists():
        raise MissingFileError(f"point table not found: {path}")
    raw = path.read_bytes()
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {"component", "level", "points"} - set(df.columns)
    if missing:
        raise FileFormatError(f"{path}: point table missing columns {sorted(missing)}")

    points: Dict[Tuple[str, str], int] = {}
    threshold: Optional[float] = None
    for row in df.to_dict(orient="records"):
        component = row["component"].strip()
        if component == "size_threshold_cm":
            threshold = float(row["points"])
            continue
        if component not in COMPONENTS:
            raise FileFormatError(f"{path}: unknown component {component!r}")
        points[(component, row["level"].strip())] = int(row["points"])

    if threshold is None:
        raise FileFormatError(f"{path}: point table has no size_threshold_cm row")
    for level in [t.value for t in TStage]:
        if ("t_stage", level) not in points:
            raise FileFormatError(f"{path}: t_stage level {level} missing")
    for level in [n.value for n in NStage]:
        if ("n_stage", level) not in points:
            raise FileFormatError(f"{path}: n_stage level {level} missing")
    for level in (SIZE_BELOW, SIZE_AT_OR_ABOVE):
        if ("size", level) not in points:
            raise FileFormatError(f"{path}: size level {level} missing")

    return PointTable(points=points, size_threshold_cm=threshold, source=str(path),
                      sha256=hashlib.sha256(raw).hexdigest())


def component_points(f: LeibovichFeatures, table: PointTable) -> Dict[str, int]:
    size_level = SIZE_AT_OR_ABOVE if f.tumor_size_cm >= table.size_threshold_cm else SIZE_BELOW
    return {
        "t_stage": table.lookup("t_stage", TStage(f.t_stage).value),
        "n_stage": table.lookup("n_stage", NStage(f.n_stage).value),
        "size": table.lookup("size", size_level),
        "grade": table.lookup("grade", str(int(f.grade))),
    }


def adjusted_leibovich(f: LeibovichFeatures, table: PointTable) -> int:
    """Sum of the T-stage, N-stage, size and grade points (no necrosis)."""
    return sum(component_points(f, table).values())


@dataclass
class LeibovichCoverage:
    scored_ids: List[str]
    excluded_ids: List[str]
    histogram: Dict[int, int]
    fraction_below_3: float
    fraction_below_6: float
    table_source: str
    table_sha256: str
    table_rows: List[Dict[str, object]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_scored": len(self.scored_ids),
            "excluded_ids": list(self.excluded_ids),
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "fraction_below_3": self.fraction_below_3,
            "fraction_below_6": self.fraction_below_6,
            "table_source": self.table_source,
            "table_sha256": self.table_sha256,
            "table": self.table_rows,
        }


def leibovich_cohort_scores(cohort: "Cohort", table: PointTable,
                            indices: Optional[List[int]] = None):
    """Score every patient with complete clinical features.

    Returns ``(scores, scored_indices, coverage)``: float risk scores for the
    scored patients, their positions in the cohort, and a coverage report.
    Patients with missing features are excluded and listed in the report.
    """
    positions = list(range(len(cohort))) if indices is None else list(indices)
    scores: List[float] = []
    scored: List[int] = []
    excluded: List[str] = []
    for i in positions:
        record = cohort.patients[i]
        if record.leibovich is None:
            excluded.append(record.patient_id)
            continue
        scores.append(float(adjusted_leibovich(record.leibovich, table)))
        scored.append(i)

    if not scored:
        raise NoCompleteFeaturesError("no patient has complete Leibovich features")
    if excluded:
        logger.warning(f"{len(excluded)} patients lack complete clinical features and were excluded")

    values = np.asarray(scores, dtype=np.float64)
    coverage = LeibovichCoverage(
        scored_ids=[cohort.patients[i].patient_id for i in scored],
        excluded_ids=excluded,
        histogram=dict(Counter(int(s) for s in scores)),
        fraction_below_3=float(np.mean(values < 3)),
        fraction_below_6=float(np.mean(values < 6)),
        table_source=table.source,
        table_sha256=table.sha256,
        table_rows=table.as_rows(),
    )
    return values, scored, coverage
