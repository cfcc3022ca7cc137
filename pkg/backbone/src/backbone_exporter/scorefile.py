"""Writer (and verifying reader) for the binary "PCRF" score-table format.

Little-endian layout:

  offset  size  field
  0       4     magic b"PCRF"
  4       4     version (u32, 1)
  8       4     n_players (u32)
  12      4     n_out (u32)
  16      4     T (u32)
  20      1     transition mode (u8: 0 none, 1 dynamic, 2 static)
  21      1     masked flag (u8)
  22      2     reserved
  24      4     CRC-32 of the allowed-transition list (u32)
  28      4     mask_value (f32)
  32      ...   emission (T x |E|, f32 row-major), then the transition payload
                (dynamic: (T-1) x |A| rows in allowed-list order; static:
                |E| x |E|; none: absent)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .graphrules import EdgeRules

MAGIC = b"PCRF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBBHIf")
_MODES = {"none": 0, "dynamic": 1, "static": 2}


def write_scores(
    path,
    rules: EdgeRules,
    emission: np.ndarray,
    trans_dynamic: np.ndarray | None = None,
    masked: bool = True,
    mask_value: float = -10000.0,
) -> None:
    T, E = emission.shape
    if E != rules.n_edges:
        raise ValueError(f"emission has {E} edges, rules have {rules.n_edges}")
    mode = "none"
    payload = b""
    if trans_dynamic is not None:
        if trans_dynamic.shape != (max(T - 1, 0), rules.n_allowed):
            raise ValueError("dynamic transition table has the wrong shape")
        mode = "dynamic"
        payload = np.ascontiguousarray(trans_dynamic, dtype="<f4").tobytes()
    header = _HEADER.pack(
        MAGIC, VERSION, rules.n_players, rules.n_out, T,
        _MODES[mode], 1 if masked else 0, 0, rules.checksum(), np.float32(mask_value),
    )
    body = np.ascontiguousarray(emission, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body + payload)


def read_scores(path, rules: EdgeRules) -> np.ndarray:
    """Read back the emission matrix of a file this package wrote (for checks)."""
    blob = Path(path).read_bytes()
    magic, version, n_players, n_out, T, mode, _masked, _pad, checksum, _mv = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a readable score file")
    if (n_players, n_out) != (rules.n_players, rules.n_out) or checksum != rules.checksum():
        raise ValueError(f"{path}: rule-set mismatch")
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return flat[: T * rules.n_edges].reshape(T, rules.n_edges).astype(np.float64)
