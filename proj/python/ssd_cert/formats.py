"""Pure-numpy readers and writers for the SSDA, SSDL and SSDP interchange files.

These mirror the C++ core byte for byte and let an exporter produce dumps
without the compiled module. All values are little-endian; every file ends
with a 64-bit FNV-1a digest over the preceding bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1

SSDA_VERSION = 1
SSDL_VERSION = 1
SSDP_VERSION = 1


class FormatError(ValueError):
    """A malformed interchange file, with the byte offset of the problem."""

    def __init__(self, path: str, message: str, offset: int):
        super().__init__(f"{path}: {message} (offset {offset})")
        self.offset = offset


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK
    return h


def _seal(body: bytes) -> bytes:
    return body + struct.pack("<Q", fnv1a64(body))


def _open(path: str, magic: bytes) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise FormatError(path, "truncated file", len(data))
    if data[:4] != magic:
        raise FormatError(path, f"bad magic {data[:4]!r}, expected {magic!r}", 0)
    stored = struct.unpack_from("<Q", data, len(data) - 8)[0]
    if stored != fnv1a64(data[:-8]):
        raise FormatError(path, "digest mismatch", len(data) - 8)
    return data[:-8]


def top_entries(a: np.ndarray, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-J (index, value) of a dense pre-activation: value descending, index ascending on ties."""
    a = np.asarray(a, dtype=np.float32)
    order = np.lexsort((np.arange(a.size), -a))[:J]
    return order.astype(np.uint32), a[order]


# ---------------------------------------------------------------- SSDA


@dataclass
class SsdaDump:
    d: int
    m: int
    V: int
    flags: int
    alpha: float
    tokens: np.ndarray  # (N, T) uint32
    index: np.ndarray  # (N, T, J) uint32
    value: np.ndarray  # (N, T, J) float32
    position_loss_m: np.ndarray  # (N, T) float32
    position_loss_proxy: np.ndarray  # (N, T) float32
    loss_m: np.ndarray  # (N,) float32
    loss_proxy: np.ndarray  # (N,) float32

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.index.shape


def write_ssda(path: str, dump: SsdaDump) -> None:
    N, T, J = dump.shape
    if not 1 <= J <= dump.m:
        raise ValueError("J must lie in [1, m]")
    head = b"SSDA" + struct.pack("<IIIIIIQId", SSDA_VERSION, dump.d, dump.m, dump.V, T, J, N, dump.flags, dump.alpha)
    entries = np.empty((N, T, J), dtype=[("i", "<u4"), ("v", "<f4")])
    entries["i"] = dump.index
    entries["v"] = dump.value
    record = np.dtype(
        [
            ("tokens", "<u4", (T,)),
            ("entries", entries.dtype, (T, J)),
            ("pm", "<f4", (T,)),
            ("pp", "<f4", (T,)),
            ("lm", "<f4"),
            ("lp", "<f4"),
        ]
    )
    recs = np.empty(N, dtype=record)
    recs["tokens"] = dump.tokens
    recs["entries"] = entries
    recs["pm"] = dump.position_loss_m
    recs["pp"] = dump.position_loss_proxy
    recs["lm"] = dump.loss_m
    recs["lp"] = dump.loss_proxy
    with open(path, "wb") as f:
        f.write(_seal(head + recs.tobytes()))


def read_ssda(path: str) -> SsdaDump:
    data = _open(path, b"SSDA")
    if len(data) < 48:
        raise FormatError(path, "truncated header", len(data))
    version, d, m, V, T, J, N, flags, alpha = struct.unpack_from("<IIIIIIQId", data, 4)
    if version != SSDA_VERSION:
        raise FormatError(path, f"unsupported SSDA version {version}", 4)
    record_bytes = T * 4 + T * J * 8 + T * 8 + 8
    if len(data) - 48 != N * record_bytes:
        raise FormatError(path, f"payload holds {len(data) - 48} bytes, header implies {N * record_bytes}", 48)
    raw = np.frombuffer(data, dtype=np.uint8, offset=48).reshape(N, record_bytes)
    o = 0

    def take(n: int, dtype: str, shape: tuple) -> np.ndarray:
        nonlocal o
        out = raw[:, o : o + n].copy().view(dtype).reshape((N,) + shape)
        o += n
        return out

    tokens = take(T * 4, "<u4", (T,))
    pairs = take(T * J * 8, "<u4", (T, J, 2))
    pm = take(T * 4, "<f4", (T,))
    pp = take(T * 4, "<f4", (T,))
    tail = take(8, "<f4", (2,))
    return SsdaDump(
        d, m, V, flags, alpha, tokens, pairs[..., 0].copy(), pairs[..., 1].copy().view("<f4"), pm, pp,
        tail[:, 0].copy(), tail[:, 1].copy(),
    )


# ---------------------------------------------------------------- SSDL


def write_ssdl(path: str, losses: np.ndarray) -> None:
    losses = np.ascontiguousarray(losses, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_seal(b"SSDL" + struct.pack("<IQ", SSDL_VERSION, losses.size) + losses.tobytes()))


def read_ssdl(path: str) -> np.ndarray:
    data = _open(path, b"SSDL")
    version, n = struct.unpack_from("<IQ", data, 4)
    if version != SSDL_VERSION:
        raise FormatError(path, f"unsupported SSDL version {version}", 4)
    if len(data) != 16 + 4 * n:
        raise FormatError(path, f"expected {n} losses", 16)
    return np.frombuffer(data, dtype="<f4", offset=16).copy()


# ---------------------------------------------------------------- SSDP


@dataclass
class Pool:
    m: int
    members: np.ndarray  # sorted uint32 feature ids
    tau: int = 1
    n_cal: int = 0
    granularity: int = 1  # 0 token, 1 sequence

    def mask(self) -> np.ndarray:
        out = np.zeros(self.m, dtype=bool)
        out[self.members] = True
        return out


def write_ssdp(path: str, pool: Pool) -> None:
    members = np.unique(np.asarray(pool.members, dtype=np.int64))
    if members.size and (members[0] < 0 or members[-1] >= pool.m):
        raise ValueError("pool member outside [0, m)")
    bits = np.packbits(Pool(pool.m, members).mask(), bitorder="little")
    head = b"SSDP" + struct.pack("<IIIQQB", SSDP_VERSION, pool.m, members.size, pool.tau, pool.n_cal, pool.granularity)
    with open(path, "wb") as f:
        f.write(_seal(head + bits.tobytes()))


def read_ssdp(path: str) -> Pool:
    data = _open(path, b"SSDP")
    version, m, P, tau, n_cal, g = struct.unpack_from("<IIIQQB", data, 4)
    if version != SSDP_VERSION:
        raise FormatError(path, f"unsupported SSDP version {version}", 4)
    bits = np.frombuffer(data, dtype=np.uint8, offset=33)
    if bits.size != (m + 7) // 8:
        raise FormatError(path, "mask length disagrees with m", 33)
    mask = np.unpackbits(bits, bitorder="little")
    if mask[m:].any():
        raise FormatError(path, "mask bit set beyond m", 33)
    members = np.flatnonzero(mask[:m]).astype(np.uint32)
    if members.size != P:
        raise FormatError(path, f"header P = {P} but mask has {members.size} bits set", 33)
    return Pool(m, members, tau, n_cal, g)
