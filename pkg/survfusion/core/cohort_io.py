"""
Cohort data model and file ingestion.

A cohort is a list of patients, each with a right-censored survival outcome,
references into per-modality embedding matrices and optional clinical
features. Manifests are CSV; embeddings live in the binary ``.femb`` format:

    magic  b"FEMB"      4 bytes
    version u16 LE      = 1
    n_rows  u32 LE
    dim     u32 LE
    payload n_rows * dim float32 LE, row-major, no padding
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union
import math
import struct

import numpy as np
import pandas as pd

from ..errors import (
    BadMagicError,
    DimensionMismatchError,
    DuplicatePatientIdError,
    FileFormatError,
    InvalidDimError,
    LengthMismatchError,
    MalformedRowError,
    MissingFileError,
    NonFiniteValueError,
    TruncatedFileError,
)
from ..utils.logging import get_logger
from .leibovich import LeibovichFeatures


logger = get_logger("CohortIO")

FEMB_MAGIC = b"FEMB"
FEMB_VERSION = 1
_FEMB_HEADER = struct.Struct("<4sHII")

MANIFEST_COLUMNS = [
    "patient_id", "time_months", "event",
    "wsi_file", "wsi_row", "ct_file", "ct_row",
    "t_stage", "n_stage", "tumor_size_cm", "grade",
]
REQUIRED_COLUMNS = ["patient_id", "time_months", "event"]
LEIBOVICH_COLUMNS = ["t_stage", "n_stage", "tumor_size_cm", "grade"]
MODALITIES = ("wsi", "ct")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class SurvivalOutcome:
    time_months: float
    event: int

    def __post_init__(self):
        if not (math.isfinite(self.time_months) and self.time_months > 0):
            raise ValueError(f"time_months must be positive and finite, got {self.time_months}")
        if self.event not in (0, 1):
            raise ValueError(f"event must be 0 or 1, got {self.event}")


class SurvivalData:
    """Parallel vectors of observed times (months) and event indicators."""

    __slots__ = ("times", "events")

    def __init__(self, times: Iterable[float], events: Iterable[int]):
        times = np.array(times, dtype=np.float64).ravel()
        events_raw = np.array(events).ravel()
        if times.shape != events_raw.shape:
            raise LengthMismatchError(
                f"times has {times.size} entries but events has {events_raw.size}"
            )
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise ValueError("survival times must be positive and finite")
        if not np.all(np.isin(events_raw, (0, 1))):
            raise ValueError("events must be 0 or 1")
        events = events_raw.astype(np.int8)
        times.setflags(write=False)
        events.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    def __setattr__(self, name, value):
        raise AttributeError("SurvivalData is immutable")

    def __reduce__(self):
        return (SurvivalData, (self.times, self.events))

    def __len__(self) -> int:
        return int(self.times.size)

    def __repr__(self) -> str:
        return f"SurvivalData(n={len(self)}, events={self.n_events})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalData):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.events, other.events))

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def subset(self, indices: Sequence[int]) -> "SurvivalData":
        idx = np.asarray(indices, dtype=np.int64)
        return SurvivalData(self.times[idx], self.events[idx])

    def outcome(self, i: int) -> SurvivalOutcome:
        return SurvivalOutcome(float(self.times[i]), int(self.events[i]))


class EmbeddingMatrix:
    """N x D patient-level features for one modality, stored as float32."""

    __slots__ = ("modality", "values")

    def __init__(self, modality: str, values):
        arr = np.array(values, dtype=np.float32)
        if arr.ndim != 2:
            raise InvalidDimError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise InvalidDimError("embedding dim must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError(f"embedding matrix for {modality!r} contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "modality", str(modality))
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("EmbeddingMatrix is immutable")

    def __reduce__(self):
        return (EmbeddingMatrix, (self.modality, self.values))

    @property
    def n_patients(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (self.modality == other.modality
                and self.values.shape == other.values.shape
                and self.values.tobytes() == other.values.tobytes())

    def __repr__(self) -> str:
        return f"EmbeddingMatrix({self.modality!r}, n={self.n_patients}, dim={self.dim})"


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    outcome: SurvivalOutcome
    embeddings: Mapping[str, int] = field(default_factory=dict)
    leibovich: Optional[LeibovichFeatures] = None


@dataclass(frozen=True)
class Cohort:
    patients: List[PatientRecord]
    matrices: Dict[str, EmbeddingMatrix]

    def __post_init__(self):
        seen = set()
        for record in self.patients:
            if not record.patient_id:
                raise ValueError("patient_id must be nonempty")
            if record.patient_id in seen:
                raise DuplicatePatientIdError(record.patient_id)
            seen.add(record.patient_id)
            for modality, row in record.embeddings.items():
                matrix = self.matrices.get(modality)
                if matrix is None:
                    raise KeyError(f"patient {record.patient_id} references unknown modality {modality!r}")
                if not 0 <= row < matrix.n_patients:
                    raise IndexError(
                        f"patient {record.patient_id}: row {row} out of bounds for {modality!r} "
                        f"({matrix.n_patients} rows)"
                    )

    def __len__(self) -> int:
        return len(self.patients)

    @property
    def patient_ids(self) -> List[str]:
        return [p.patient_id for p in self.patients]

    @property
    def modalities(self) -> List[str]:
        return sorted(self.matrices)

    def survival_data(self, indices: Optional[Sequence[int]] = None) -> SurvivalData:
        records = self.patients if indices is None else [self.patients[i] for i in indices]
        return SurvivalData(
            [r.outcome.time_months for r in records],
            [r.outcome.event for r in records],
        )

    def has_modality(self, modality: str, indices: Optional[Sequence[int]] = None) -> bool:
        records = self.patients if indices is None else [self.patients[i] for i in indices]
        return modality in self.matrices and all(modality in r.embeddings for r in records)

    def features(self, modality: str, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Gather a float64 feature matrix for ``modality`` in patient order."""
        if modality not in self.matrices:
            raise KeyError(f"cohort has no {modality!r} embeddings")
        records = self.patients if indices is None else [self.patients[i] for i in indices]
        rows = []
        for r in records:
            if modality not in r.embeddings:
                raise KeyError(f"patient {r.patient_id} has no {modality!r} embedding")
            rows.append(r.embeddings[modality])
        return self.matrices[modality].values[np.asarray(rows, dtype=np.int64)].astype(np.float64)

    def dims(self) -> Dict[str, int]:
        return {m: mat.dim for m, mat in self.matrices.items()}


# Embedding files

def write_embeddings(matrix: EmbeddingMatrix, path: PathLike) -> None:
    """Write ``matrix`` to ``path`` in the .femb format."""
    path = Path(path)
    header = _FEMB_HEADER.pack(FEMB_MAGIC, FEMB_VERSION, matrix.n_patients, matrix.dim)
    payload = matrix.values.astype("<f4", copy=False).tobytes(order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_embeddings(path: PathLike, modality: Optional[str] = None) -> EmbeddingMatrix:
    """Read a .femb file. The modality label defaults to the file stem."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"embedding file not found: {path}")
    data = path.read_bytes()
    if len(data) < 4 or data[:4] != FEMB_MAGIC:
        raise BadMagicError(f"{path}: not a .femb file (bad magic bytes)")
    if len(data) < _FEMB_HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, n_rows, dim = _FEMB_HEADER.unpack_from(data, 0)
    if version != FEMB_VERSION:
        raise FileFormatError(f"{path}: unsupported .femb version {version}")
    expected = _FEMB_HEADER.size + n_rows * dim * 4
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise FileFormatError(f"{path}: {len(data) - expected} trailing bytes after payload")
    values = np.frombuffer(data, dtype="<f4", count=n_rows * dim, offset=_FEMB_HEADER.size)
    return EmbeddingMatrix(modality or path.stem, values.reshape(n_rows, dim))


# Manifests

def _is_blank(value: str) -> bool:
    return value is None or str(value).strip() == ""


def _parse_leibovich(row: Mapping[str, str], row_number: int, patient_id: str) -> Optional[LeibovichFeatures]:
    present = [c for c in LEIBOVICH_COLUMNS if c in row]
    values = {c: row[c] for c in present}
    if len(present) < len(LEIBOVICH_COLUMNS) or any(_is_blank(v) for v in values.values()):
        return None
    try:
        return LeibovichFeatures.from_strings(
            t_stage=values["t_stage"],
            n_stage=values["n_stage"],
            tumor_size_cm=values["tumor_size_cm"],
            grade=values["grade"],
        )
    except ValueError as e:
        raise MalformedRowError(f"patient {patient_id}: invalid clinical features: {e}", row=row_number) from e


def load_manifest(manifest_path: PathLike) -> Cohort:
    """Load and validate a cohort from a CSV manifest.

    Embedding file paths are resolved relative to the manifest's directory.
    Patient order equals manifest row order.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"manifest not found: {manifest_path}")

    try:
        df = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise MalformedRowError("empty cohort") from e

    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise MalformedRowError(f"manifest is missing required columns {missing}")
    if len(df) == 0:
        raise MalformedRowError("empty cohort")

    base_dir = manifest_path.parent
    file_cache: Dict[Path, EmbeddingMatrix] = {}
    gathered: Dict[str, List[np.ndarray]] = {m: [] for m in MODALITIES}
    patients: List[PatientRecord] = []
    seen = set()

    for i, row in enumerate(df.to_dict(orient="records"), start=1):
        patient_id = row["patient_id"].strip()
        if not patient_id:
            raise MalformedRowError("empty patient_id", row=i)
        if patient_id in seen:
            raise DuplicatePatientIdError(patient_id)
        seen.add(patient_id)

        try:
            time_months = float(row["time_months"])
            event_text = row["event"].strip()
            if event_text not in ("0", "1"):
                raise ValueError(f"event must be 0 or 1, got {event_text!r}")
            outcome = SurvivalOutcome(time_months, int(event_text))
        except ValueError as e:
            raise MalformedRowError(str(e), row=i) from e

        embeddings: Dict[str, int] = {}
        for modality in MODALITIES:
            file_col, row_col = f"{modality}_file", f"{modality}_row"
            if file_col not in row or _is_blank(row[file_col]):
                continue
            file_path = (base_dir / row[file_col].strip()).resolve()
            if file_path not in file_cache:
                if not file_path.exists():
                    raise MissingFileError(f"row {i}: embedding file not found: {file_path}")
                file_cache[file_path] = read_embeddings(file_path, modality)
            source = file_cache[file_path]
            row_text = row.get(row_col)
            if _is_blank(row_text):
                raise MalformedRowError(f"{file_col} is set but {row_col} is blank", row=i)
            try:
                source_row = int(row_text.strip())
            except ValueError as e:
                raise MalformedRowError(f"{row_col} is not an integer: {row_text!r}", row=i) from e
            if not 0 <= source_row < source.n_patients:
                raise MalformedRowError(
                    f"{row_col}={source_row} out of bounds for {file_path.name} ({source.n_patients} rows)",
                    row=i,
                )
            if gathered[modality] and gathered[modality][0].shape[0] != source.dim:
                raise DimensionMismatchError(
                    f"row {i}: {modality} embedding dim {source.dim} differs from "
                    f"{gathered[modality][0].shape[0]} in earlier rows"
                )
            embeddings[modality] = len(gathered[modality])
            gathered[modality].append(source.values[source_row])

        patients.append(PatientRecord(
            patient_id=patient_id,
            outcome=outcome,
            embeddings=embeddings,
            leibovich=_parse_leibovich(row, i, patient_id),
        ))

    matrices = {
        m: EmbeddingMatrix(m, np.stack(rows))
        for m, rows in gathered.items() if rows
    }
    cohort = Cohort(patients=patients, matrices=matrices)
    logger.info(
        f"Loaded {len(cohort)} patients ({cohort.survival_data().n_events} events) "
        f"with modalities {cohort.modalities} from {manifest_path}"
    )
    return cohort


def write_manifest(cohort: Cohort, manifest_path: PathLike,
                   embedding_files: Mapping[str, str]) -> None:
    """Write ``cohort`` as a manifest whose rows point into ``embedding_files``.

    ``embedding_files`` maps modality to a file name relative to the manifest;
    the matrices themselves are written separately with ``write_embeddings``.
    """
    manifest_path = Path(manifest_path)
    rows = []
    for record in cohort.patients:
        row = {c: "" for c in MANIFEST_COLUMNS}
        row["patient_id"] = record.patient_id
        row["time_months"] = repr(float(record.outcome.time_months))
        row["event"] = str(record.outcome.event)
        for modality, index in record.embeddings.items():
            row[f"{modality}_file"] = embedding_files[modality]
            row[f"{modality}_row"] = str(index)
        if record.leibovich is not None:
            row.update(record.leibovich.to_strings())
        rows.append(row)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(
        manifest_path, index=False, lineterminator="\n"
    )
