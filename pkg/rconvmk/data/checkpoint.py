"""
Checkpoint file format (version 1)
----------------------------------
    b"RCMK"                       magic
    u16 little-endian             format version
    u32 little-endian             header length in bytes
    header                        UTF-8 JSON, sorted keys
    payload                       float32 little-endian tensors, row-major,
                                  in header order
    32 bytes                      SHA-256 of everything above

The header carries the model spec and seed, one entry per tensor (name, shape,
byte offset, byte length), optimizer hyperparameters, the RNG state and the
training step counter. Writes go to a temp file that is renamed into place.
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from rconvmk import __version__
from rconvmk.errors import CheckpointError, ChecksumError, SpecMismatchError, VersionError
from rconvmk.models.resnet import Model, ModelSpec, build_model
from rconvmk.nn.optim import SGD

logger = logging.getLogger(__name__)

MAGIC = b"RCMK"
FORMAT_VERSION = 1
DIGEST_BYTES = 32
_PREFIX = struct.Struct("<4sHI")

VELOCITY_PREFIX = "optim.velocity."


@dataclass
class Checkpoint:
    spec: ModelSpec
    seed: int
    tensors: "OrderedDict[str, np.ndarray]"
    optimizer: Optional[Dict[str, Any]] = None
    rng_state: Optional[Dict[str, Any]] = None
    step: int = 0
    version: int = FORMAT_VERSION
    meta: Dict[str, Any] = field(default_factory=dict)

    def model_tensors(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(VELOCITY_PREFIX)}

    def rng(self) -> Optional[np.random.Generator]:
        if self.rng_state is None:
            return None
        gen = np.random.default_rng()
        gen.bit_generator.state = self.rng_state
        return gen


# ============================================================
# Encoding
# ============================================================
def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, value in ckpt.tensors.items():
        data = np.ascontiguousarray(value, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(value)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)

    header = {
        "spec": ckpt.spec.model_dump(mode="json"),
        "seed": ckpt.seed,
        "tensors": entries,
        "optimizer": ckpt.optimizer,
        "rng_state": ckpt.rng_state,
        "step": ckpt.step,
        "meta": ckpt.meta,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.version, len(header_bytes)) + header_bytes + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < _PREFIX.size + DIGEST_BYTES:
        raise CheckpointError(f"checkpoint truncated: {len(blob)} bytes")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint: magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")

    body, digest = blob[:-DIGEST_BYTES], blob[-DIGEST_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch; the file is corrupt")

    start = _PREFIX.size
    if start + header_len > len(body):
        raise CheckpointError(f"header length {header_len} exceeds file size")
    try:
        header = json.loads(body[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e

    payload = body[start + header_len:]
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    expected_offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if entry["nbytes"] != nbytes or entry["offset"] != expected_offset:
            raise CheckpointError(f"tensor {entry['name']}: byte length/offset does not match shape {shape}")
        chunk = payload[expected_offset:expected_offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"tensor {entry['name']}: payload truncated")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float32)
        expected_offset += nbytes
    if expected_offset != len(payload):
        raise CheckpointError(f"{len(payload) - expected_offset} unaccounted payload bytes")

    return Checkpoint(
        spec=ModelSpec(**header["spec"]),
        seed=int(header["seed"]),
        tensors=tensors,
        optimizer=header["optimizer"],
        rng_state=header["rng_state"],
        step=int(header["step"]),
        version=version,
        meta=header.get("meta") or {},
    )


# ============================================================
# Model <-> checkpoint
# ============================================================
def make_checkpoint(model: Model, optimizer: Optional[SGD] = None,
                    rng: Optional[np.random.Generator] = None, step: int = 0) -> Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict(model.state_dict())
    opt_state = None
    if optimizer is not None:
        state = optimizer.state_dict()
        velocities = state.pop("velocities")
        state["velocities"] = []
        for i, v in enumerate(velocities):
            if v is None:
                state["velocities"].append(None)
                continue
            name = f"{VELOCITY_PREFIX}{i}"
            tensors[name] = v
            state["velocities"].append(name)
        opt_state = state
    return Checkpoint(
        spec=model.spec,
        seed=model.seed,
        tensors=tensors,
        optimizer=opt_state,
        rng_state=None if rng is None else rng.bit_generator.state,
        step=int(step),
        meta={"package_version": __version__},
    )


def write_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """Atomically write ``ckpt`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info("Checkpoint written: %s (%d tensors, %d bytes)", path, len(ckpt.tensors), len(blob))
    return path


def save_checkpoint(model: Model, optimizer: Optional[SGD], path: Union[str, Path],
                    rng: Optional[np.random.Generator] = None, step: int = 0) -> Path:
    return write_checkpoint(make_checkpoint(model, optimizer, rng, step), path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def first_spec_difference(expected: ModelSpec, actual: ModelSpec) -> Optional[str]:
    left, right = expected.model_dump(mode="json"), actual.model_dump(mode="json")
    for key in ModelSpec.model_fields:
        if left.get(key) != right.get(key):
            return key
    return None


def restore(ckpt: Checkpoint, model: Model, optimizer: Optional[SGD] = None) -> None:
    """Load ``ckpt`` into ``model`` (and ``optimizer``); the specs must agree."""
    diff = first_spec_difference(ckpt.spec, model.spec)
    if diff is not None:
        raise SpecMismatchError(
            f"checkpoint spec differs at '{diff}': "
            f"{getattr(ckpt.spec, diff)!r} != {getattr(model.spec, diff)!r}"
        )
    model.load_state_dict(ckpt.model_tensors())
    if optimizer is not None and ckpt.optimizer is not None:
        state = dict(ckpt.optimizer)
        state["velocities"] = [None if name is None else ckpt.tensors[name] for name in state["velocities"]]
        optimizer.load_state_dict(state)


def load_model(path: Union[str, Path]) -> Tuple[Model, Checkpoint]:
    """Rebuild the model described by a checkpoint and load its weights."""
    ckpt = load_checkpoint(path)
    model = build_model(ckpt.spec, ckpt.seed)
    restore(ckpt, model)
    model.eval()
    return model, ckpt
