"""Binary score-file interchange ("PCRF" format).

Layout, little-endian throughout:

  offset  size  field
  0       4     magic b"PCRF"
  4       4     version (u32, currently 1)
  8       4     n_players (u32)
  12      4     n_out (u32)
  16      4     T (u32)
  20      1     transition mode (u8: 0 none, 1 dynamic, 2 static)
  21      1     masked flag (u8)
  22      2     reserved (zero)
  24      4     CRC-32 of the rule set's allowed_list (u32)
  28      4     mask_value (f32)
  32      ...   emission matrix, f32, row-major (t major, edge minor), T x |E|
          ...   transition payload: dynamic (T-1) x |A| rows in allowed_list
                order; static |E| x |E|; none: absent

The checksum ties a file to the exact sparse transition layout it was written
against; loading with a different rule set is rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .lattice import ScoreTable
from .rules import RuleSet, build_rule_set

MAGIC = b"PCRF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBBHIf")
_MODES = {"none": 0, "dynamic": 1, "static": 2}
_MODES_INV = {v: k for k, v in _MODES.items()}


class ScoreFileError(ValueError):
    pass


def save_score_table(path, table: ScoreTable, rules: RuleSet) -> None:
    path = Path(path)
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        rules.n_players,
        rules.n_out,
        table.T,
        _MODES[table.trans_mode],
        1 if table.masked else 0,
        0,
        rules.checksum(),
        np.float32(table.mask_value),
    )
    chunks = [header, table.emission.astype("<f4").tobytes()]
    if table.trans_mode == "dynamic":
        chunks.append(table.trans_dynamic.astype("<f4").tobytes())
    elif table.trans_mode == "static":
        chunks.append(table.trans_static.astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))


def load_score_table(path, rules: RuleSet | None = None) -> tuple[ScoreTable, RuleSet]:
    """Read a score file; returns the table and the rule set it was checked against.

    If ``rules`` is omitted, a rule set is rebuilt from the header counts (the
    checksum is still verified against it).
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ScoreFileError(f"{path}: truncated header")
    magic, version, n_players, n_out, T, mode_code, masked, _pad, checksum, mask_value = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ScoreFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ScoreFileError(f"{path}: unsupported version {version}")
    if mode_code not in _MODES_INV:
        raise ScoreFileError(f"{path}: unknown transition mode {mode_code}")
    mode = _MODES_INV[mode_code]

    if rules is None:
        rules = build_rule_set(n_players, n_out)
    elif (rules.n_players, rules.n_out) != (n_players, n_out):
        raise ScoreFileError(
            f"{path}: file is for ({n_players}, {n_out}) nodes, rules are "
            f"({rules.n_players}, {rules.n_out})"
        )
    if rules.checksum() != checksum:
        raise ScoreFileError(f"{path}: allowed_list checksum mismatch (rule sets differ)")

    n_edges = rules.n_edges
    expect = T * n_edges
    if mode == "dynamic":
        expect += max(T - 1, 0) * rules.n_allowed
    elif mode == "static":
        expect += n_edges * n_edges
    payload = blob[_HEADER.size:]
    if len(payload) != expect * 4:
        raise ScoreFileError(f"{path}: payload has {len(payload)} bytes, expected {expect * 4}")

    flat = np.frombuffer(payload, dtype="<f4")
    emission = flat[: T * n_edges].reshape(T, n_edges).astype(np.float64)
    trans_dynamic = trans_static = None
    rest = flat[T * n_edges:]
    if mode == "dynamic":
        trans_dynamic = rest.reshape(max(T - 1, 0), rules.n_allowed).astype(np.float64)
    elif mode == "static":
        trans_static = rest.reshape(n_edges, n_edges).astype(np.float64)

    table = ScoreTable(
        emission=emission,
        trans_mode=mode,
        trans_dynamic=trans_dynamic,
        trans_static=trans_static,
        masked=bool(masked),
        mask_value=float(mask_value),
    )
    return table, rules
