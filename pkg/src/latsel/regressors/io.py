"""Binary model container.

Layout (little-endian)::

    b"LATSELM\\0" | u32 version | u32 header length | header JSON |
    array blocks (float32 weights, int32 tree indices) | sha256 of all preceding bytes

The header carries the regressor id, feature schema, target bounds, the
estimator architecture and a (name, dtype, shape) entry per block.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ChecksumFailure, VersionMismatch
from ..params import FeatureSchema
from .forest import Forest, Tree
from .ids import RegressorId
from .linear import LinearModel
from .model import Regressor
from .nets import MEDNNet, MednConfig, MLPNet

MAGIC = b"LATSELM\0"
VERSION = 1
_DIGEST = 32


def _core_blocks(core) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    if isinstance(core, LinearModel):
        return {"type": "linear", "input_dim": core.input_dim}, [
            ("coef", core.coef.astype("<f4")),
            ("intercept", np.array([core.intercept], dtype="<f4")),
        ]
    if isinstance(core, Forest):
        blocks = []
        for i, t in enumerate(core.trees):
            blocks += [
                (f"tree{i}.feature", t.feature.astype("<i4")),
                (f"tree{i}.threshold", t.threshold.astype("<f4")),
                (f"tree{i}.left", t.left.astype("<i4")),
                (f"tree{i}.right", t.right.astype("<i4")),
                (f"tree{i}.value", t.value.astype("<f4")),
            ]
        return {"type": "forest", "input_dim": core.input_dim, "trees": len(core.trees)}, blocks
    params = [(f"p{i}", p.astype("<f4")) for i, p in enumerate(core.params())]
    if isinstance(core, MLPNet):
        return {"type": "mlp", "input_dim": core.input_dim, "hidden": list(core.hidden), "beta": core.beta}, params
    if isinstance(core, MEDNNet):
        return {
            "type": "medn",
            "input_dim": core.input_dim,
            "medn": core.cfg.to_dict(),
            "reconstruct": core.reconstruct,
            "beta": core.beta,
        }, params
    raise TypeError(f"cannot serialize {type(core).__name__}")


def _core_from_blocks(arch: dict, blocks: dict[str, np.ndarray]):
    kind = arch["type"]
    if kind == "linear":
        return LinearModel(blocks["coef"].astype(np.float64), float(blocks["intercept"][0]))
    if kind == "forest":
        trees = [
            Tree(*(blocks[f"tree{i}.{part}"] for part in ("feature", "threshold", "left", "right", "value")))
            for i in range(arch["trees"])
        ]
        return Forest(trees, arch["input_dim"])
    if kind == "mlp":
        net = MLPNet(arch["input_dim"], tuple(arch["hidden"]), beta=arch["beta"])
    elif kind == "medn":
        cfg = MednConfig(tuple(arch["medn"]["encoder_hidden"]), float(arch["medn"]["weight_ratio"]))
        net = MEDNNet(arch["input_dim"], cfg, reconstruct=arch["reconstruct"], beta=arch["beta"])
    else:
        raise VersionMismatch(f"unknown estimator type {kind!r}")
    net.set_params([blocks[f"p{i}"] for i in range(len(net.params()))])
    return net


def model_bytes(model: Regressor) -> bytes:
    arch, blocks = _core_blocks(model.core)
    header = {
        "regressor": model.rid.label,
        "schema": model.schema.to_dict(),
        "target": [model.target_min, model.target_max],
        "arch": arch,
        "blocks": [[name, arr.dtype.str, list(arr.shape)] for name, arr in blocks],
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<II", VERSION, len(hjson)) + hjson
    body += b"".join(np.ascontiguousarray(arr).tobytes() for _, arr in blocks)
    return body + hashlib.sha256(body).digest()


def save_model(path: str | Path, model: Regressor) -> int:
    """Write ``model``; returns the file size in bytes."""
    data = model_bytes(model)
    Path(path).write_bytes(data)
    return len(data)


def model_from_bytes(data: bytes) -> Regressor:
    if len(data) < len(MAGIC) + 8 + _DIGEST or not data.startswith(MAGIC):
        raise ChecksumFailure("not a latsel model file (bad magic or truncated)")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != VERSION:
        raise VersionMismatch(f"model file version {version}, expected {VERSION}")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumFailure("model file checksum mismatch (truncated or corrupted)")
    off = len(MAGIC) + 8
    header = json.loads(body[off : off + hlen].decode("utf-8"))
    off += hlen
    blocks = {}
    for name, dtype, shape in header["blocks"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype=dt, count=count, offset=off).reshape(shape)
        blocks[name] = arr.copy()
        off += count * dt.itemsize
    if off != len(body):
        raise ChecksumFailure("model file has trailing bytes")
    return Regressor(
        RegressorId.parse(header["regressor"]),
        FeatureSchema.from_dict(header["schema"]),
        float(header["target"][0]),
        float(header["target"][1]),
        _core_from_blocks(header["arch"], blocks),
    )


def load_model(path: str | Path) -> Regressor:
    return model_from_bytes(Path(path).read_bytes())


def model_size_kb(path: str | Path) -> float:
    return Path(path).stat().st_size / 1024.0


def model_path(models_dir: str | Path, kind, rid: RegressorId) -> Path:
    return Path(models_dir) / str(kind) / f"{rid.label}.bin"
