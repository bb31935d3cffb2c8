"""Named parameter collections with freeze flags, optimizer state and metadata.

On-disk archive: magic "CSEG", version u32, entry count u32, then per entry
(name length u32 + utf-8 bytes, rank u64 + dims u64 each, freeze-flag byte,
float32 payload), all little-endian. Optimizer moments and metadata ride
along as reserved-prefix entries ("opt/", "meta/") inside the same format,
so a round trip restores training state bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import IoFailure, MalformedFile, VersionMismatch
from .tensor import Tensor

MAGIC = b"CSEG"
VERSION = 1
_OPT_M = "opt/m/"
_OPT_V = "opt/v/"
_OPT_STEP = "opt/step"
_META = "meta/"
RESERVED_PREFIXES = (_OPT_M, _OPT_V, _OPT_STEP, _META)


class ModelCheckpoint:
    """Mutable parameter store owned by a single training driver."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.opt_m: dict[str, np.ndarray] = {}
        self.opt_v: dict[str, np.ndarray] = {}
        self.opt_step: int = 0
        self.meta: dict[str, float] = {}

    def add(self, name: str, values, frozen: bool = False) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        for prefix in RESERVED_PREFIXES:
            if name.startswith(prefix):
                raise KeyError(f"parameter name {name!r} uses a reserved prefix")
        t = Tensor(np.asarray(values, dtype=np.float32), requires_grad=not frozen)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.params if n.startswith(prefix)]

    def frozen(self, name: str) -> bool:
        return not self.params[name].requires_grad

    def set_frozen(self, name: str, frozen: bool) -> None:
        self.params[name].requires_grad = not frozen
        if frozen:
            self.params[name].grad = None
            self.opt_m.pop(name, None)
            self.opt_v.pop(name, None)

    def freeze_prefix(self, prefix: str) -> None:
        for name in self.names(prefix):
            self.set_frozen(name, True)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.params.items() if t.requires_grad]

    def bytes_of(self, prefix: str = "") -> bytes:
        """Concatenated little-endian float32 image of matching parameters."""
        chunks = []
        for name in sorted(self.names(prefix)):
            chunks.append(self.params[name].values.astype("<f4", copy=False).tobytes())
        return b"".join(chunks)

    def clone(self) -> "ModelCheckpoint":
        out = ModelCheckpoint()
        for name, t in self.params.items():
            out.add(name, t.values.copy(), frozen=not t.requires_grad)
        out.opt_m = {k: v.copy() for k, v in self.opt_m.items()}
        out.opt_v = {k: v.copy() for k, v in self.opt_v.items()}
        out.opt_step = self.opt_step
        out.meta = dict(self.meta)
        return out


def _write_entry(fh, name: str, arr: np.ndarray, frozen: bool) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<Q", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(struct.pack("<B", 1 if frozen else 0))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(ckpt: ModelCheckpoint, path: str) -> None:
    entries: list[tuple[str, np.ndarray, bool]] = []
    for name in sorted(ckpt.params):
        t = ckpt.params[name]
        entries.append((name, t.values, not t.requires_grad))
    for name in sorted(ckpt.opt_m):
        entries.append((_OPT_M + name, ckpt.opt_m[name], False))
    for name in sorted(ckpt.opt_v):
        entries.append((_OPT_V + name, ckpt.opt_v[name], False))
    if ckpt.opt_step:
        entries.append((_OPT_STEP, np.float32(ckpt.opt_step), False))
    for key in sorted(ckpt.meta):
        entries.append((_META + key, np.float32(ckpt.meta[key]), False))

    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<I", len(entries)))
            for name, arr, frozen in entries:
                _write_entry(fh, name, np.atleast_1d(np.asarray(arr)), frozen)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedFile("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str) -> ModelCheckpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise MalformedFile(f"{path}: bad checkpoint magic")
    version = rd.u32()
    if version != VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {VERSION}")
    count = rd.u32()
    ckpt = ModelCheckpoint()
    for _ in range(count):
        name_len = rd.u32()
        name = rd.take(name_len).decode("utf-8")
        rank = rd.u64()
        if rank > 8:
            raise MalformedFile(f"{path}: implausible tensor rank {rank}")
        shape = tuple(rd.u64() for _ in range(rank))
        frozen = rd.take(1)[0] != 0
        n_vals = int(np.prod(shape)) if shape else 1
        payload = rd.take(n_vals * 4)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
        if name.startswith(_OPT_M):
            ckpt.opt_m[name[len(_OPT_M):]] = arr.copy()
        elif name.startswith(_OPT_V):
            ckpt.opt_v[name[len(_OPT_V):]] = arr.copy()
        elif name == _OPT_STEP:
            ckpt.opt_step = int(arr.reshape(-1)[0])
        elif name.startswith(_META):
            ckpt.meta[name[len(_META):]] = float(arr.reshape(-1)[0])
        else:
            ckpt.add(name, arr.copy(), frozen=frozen)
    if rd.pos != len(data):
        raise MalformedFile(f"{path}: {len(data) - rd.pos} trailing bytes")
    # moments only make sense for unfrozen parameters
    for name in list(ckpt.opt_m):
        if name not in ckpt.params or not ckpt.params[name].requires_grad:
            raise MalformedFile(f"{path}: optimizer state for frozen/unknown {name!r}")
    return ckpt
