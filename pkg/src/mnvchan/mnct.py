"""Binary channel-tensor files.

Layout (little endian): magic ``MNCT\\x01``; header ``u32 L, u32 n_links,
u32 T, u32 Q, f64 f_c, f64 delta_f, f64 t_sys, u8 freq_convention``; then per
link ``u16 a, u16 b`` followed by ``T * Q`` complex64 values, time-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .synth import ChannelTensor

MAGIC = b"MNCT\x01"
_HEADER = struct.Struct("<IIIIdddB")
_LINK = struct.Struct("<HH")


def tensor_bytes(tensor: ChannelTensor) -> bytes:
    parts = [MAGIC, _HEADER.pack(tensor.L, len(tensor.links), tensor.T, tensor.Q, tensor.f_c, tensor.delta_f,
                                 tensor.T_sys, tensor.freq_convention)]
    for (a, b), block in zip(tensor.links, tensor.data):
        parts.append(_LINK.pack(a, b))
        parts.append(np.ascontiguousarray(block, dtype="<c8").tobytes())
    return b"".join(parts)


def write_tensor(path, tensor: ChannelTensor) -> None:
    Path(path).write_bytes(tensor_bytes(tensor))


def parse_tensor(buf: bytes) -> ChannelTensor:
    if buf[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic: not an MNCT v1 file")
    off = len(MAGIC)
    if len(buf) < off + _HEADER.size:
        raise FormatError(f"truncated header at offset {len(buf)}")
    L, n_links, T, Q, f_c, df, t_sys, conv = _HEADER.unpack_from(buf, off)
    off += _HEADER.size
    block = T * Q * 8
    links, data = [], np.empty((n_links, T, Q), dtype=np.complex64)
    for i in range(n_links):
        if len(buf) < off + _LINK.size + block:
            raise FormatError(f"truncated file: link {i} data expected at offset {off}, file has {len(buf)} bytes")
        links.append(_LINK.unpack_from(buf, off))
        off += _LINK.size
        data[i] = np.frombuffer(buf, dtype="<c8", count=T * Q, offset=off).reshape(T, Q)
        off += block
    if off != len(buf):
        raise FormatError(f"trailing bytes after offset {off}")
    return ChannelTensor(links, data, t_sys, df, f_c, L, conv)


def read_tensor(path) -> ChannelTensor:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return parse_tensor(buf)
