"""
Model checkpoint codec (``.cxmp``).

    magic        b"CXMP"
    version      u16 LE = 1
    input_dim    u32 LE
    hidden_dim   u32 LE
    dropout      f64 LE
    seed         u64 LE
    n_modalities u8, then per modality: u8 length + UTF-8 name
    projection   u8 (0/1); if 1: wsi_dim u32 LE, ct_dim u32 LE
    arrays       float64 LE: W1, b1, ln_gain, ln_bias, W2, b2[, proj W, proj b]

A late-fusion fold is a JSON file holding the tuned alpha and the names of
its two per-modality checkpoints, which sit next to it.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union
import json
import struct

import numpy as np

from ..errors import BadMagicError, FileFormatError, MissingFileError, TruncatedFileError
from .fusion import CtProjection, LateFusionWeight, late_fuse
from .nn import MlpConfig, MlpParams, RiskModel


CXMP_MAGIC = b"CXMP"
CXMP_VERSION = 1
_HEAD = struct.Struct("<4sHIIdQ")


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedFileError(f"{self.path}: checkpoint truncated")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def save_checkpoint(model: RiskModel, path: Union[str, Path]) -> None:
    path = Path(path)
    cfg = model.config
    parts = [_HEAD.pack(CXMP_MAGIC, CXMP_VERSION, model.params.input_dim, model.params.hidden_dim,
                        float(cfg.dropout), int(cfg.seed) & 0xFFFFFFFFFFFFFFFF)]
    parts.append(struct.pack("<B", len(model.modalities)))
    for modality in model.modalities:
        name = modality.encode("utf-8")
        parts.append(struct.pack("<B", len(name)) + name)
    if model.projection is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BII", 1, model.projection.wsi_dim, model.projection.ct_dim))
    arrays = list(model.params.named().values())
    if model.projection is not None:
        arrays += [model.projection.W, model.projection.b]
    for arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: Union[str, Path]) -> RiskModel:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:4] != CXMP_MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint (bad magic bytes)")
    reader = _Reader(data, path)
    _, version, input_dim, hidden_dim, dropout, seed = reader.unpack(_HEAD.format)
    if version != CXMP_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    (n_modalities,) = reader.unpack("<B")
    modalities = []
    for _ in range(n_modalities):
        (length,) = reader.unpack("<B")
        modalities.append(reader.take(length).decode("utf-8"))
    (has_projection,) = reader.unpack("<B")
    proj_dims = reader.unpack("<II") if has_projection else None

    params = MlpParams(
        W1=reader.array((hidden_dim, input_dim)),
        b1=reader.array((hidden_dim,)),
        ln_gain=reader.array((hidden_dim,)),
        ln_bias=reader.array((hidden_dim,)),
        W2=reader.array((1, hidden_dim)),
        b2=reader.array((1,)),
    )
    projection = None
    if proj_dims is not None:
        wsi_dim, ct_dim = proj_dims
        projection = CtProjection(W=reader.array((wsi_dim, ct_dim)), b=reader.array((wsi_dim,)))
    if reader.offset != len(data):
        raise FileFormatError(f"{path}: {len(data) - reader.offset} trailing bytes")

    config = MlpConfig.model_construct(input_dim=input_dim, hidden_dim=hidden_dim,
                                       dropout=dropout, seed=seed)
    return RiskModel(config=config, params=params, modalities=tuple(modalities), projection=projection)


@dataclass
class LateFusionCheckpoint:
    """The two per-modality models of a late-fusion fold and their tuned weight."""

    wsi: RiskModel
    ct: RiskModel
    weight: LateFusionWeight

    @property
    def modalities(self) -> Tuple[str, ...]:
        return ("wsi", "ct")

    def predict(self, features: Dict[str, np.ndarray]) -> np.ndarray:
        return late_fuse(self.wsi.predict(features), self.ct.predict(features), self.weight)


def save_late_fusion(wsi: RiskModel, ct: RiskModel, weight: LateFusionWeight, path: Union[str, Path]) -> None:
    """Write ``<stem>_wsi.cxmp``, ``<stem>_ct.cxmp`` and the JSON file at ``path`` naming them.

    Args:
        wsi: Unimodal WSI model of the fold.
        ct: Unimodal CT model of the fold.
        weight: Alpha tuned on the fold's inner validation predictions.
        path: Destination of the JSON file; the checkpoints go next to it.
    """
    path = Path(path)
    files = {"wsi": f"{path.stem}_wsi.cxmp", "ct": f"{path.stem}_ct.cxmp"}
    save_checkpoint(wsi, path.parent / files["wsi"])
    save_checkpoint(ct, path.parent / files["ct"])
    payload = {"strategy": "late", "alpha": weight.alpha, "checkpoints": files}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_late_fusion(path: Union[str, Path]) -> LateFusionCheckpoint:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"late-fusion file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        files = payload["checkpoints"]
        weight = LateFusionWeight(float(payload["alpha"]))
        wsi_file, ct_file = files["wsi"], files["ct"]
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: invalid JSON ({e.msg})") from e
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"{path}: not a late-fusion file ({e})") from e
    return LateFusionCheckpoint(wsi=load_checkpoint(path.parent / wsi_file),
                                ct=load_checkpoint(path.parent / ct_file), weight=weight)


def load_scorer(path: Union[str, Path]) -> Union[RiskModel, LateFusionCheckpoint]:
    """A ``.json`` path loads a late-fusion fold; anything else is a ``.cxmp`` checkpoint."""
    if Path(path).suffix.lower() == ".json":
        return load_late_fusion(path)
    return load_checkpoint(path)
