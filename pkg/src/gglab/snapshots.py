"""Binary snapshots and CSV tables.

Height/gradient snapshot layout (little endian)::

    magic "GGL1" | u16 version | u16 d | u32 N | u8 model ('A'/'B') | u8 kind
    | u64 seed | u64 steps | i32[d] offset | u64 count | f64[count] payload

``kind`` is 0 for heights in site order and 1 for gradients in edge order.
Disorder snapshots use magic ``"GGD1"`` with the law name and its two
parameters in place of the step count.

CSV tables start with one ``# key=value;key=value`` metadata line followed
by a header row; quoting follows RFC 4180 via :mod:`csv`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .lattice import LatticeBox, build_box
from .potentials import DisorderLaw, DisorderSample

VERSION = 1
_HEAD = struct.Struct("<4sHHIBBQQ")
_DHEAD = struct.Struct("<4sHHIBQ16sdd")
KIND_HEIGHTS, KIND_GRADIENTS = 0, 1


class SnapshotError(ValueError):
    pass


def write_field(path, box: LatticeBox, values, model: str = "A", seed: int = 0, steps: int = 0,
                kind: int = KIND_HEIGHTS) -> None:
    values = np.ascontiguousarray(values, dtype="<f8").ravel()
    expected = box.n_sites if kind == KIND_HEIGHTS else box.n_edges
    if len(values) != expected:
        raise SnapshotError(f"payload has {len(values)} values, box expects {expected}")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(b"GGL1", VERSION, box.d, box.N, ord(model), kind, seed & (2**64 - 1), steps))
        fh.write(np.asarray(box.offset, dtype="<i4").tobytes())
        fh.write(struct.pack("<Q", len(values)))
        fh.write(values.tobytes())


def read_field(path):
    """Returns ``(box, values, meta)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size or data[:4] != b"GGL1":
        raise SnapshotError("not a GGL1 snapshot")
    magic, version, d, N, model, kind, seed, steps = _HEAD.unpack_from(data)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    pos = _HEAD.size
    offset = tuple(int(v) for v in np.frombuffer(data, "<i4", d, pos))
    pos += 4 * d
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) != pos + 8 * count:
        raise SnapshotError("truncated snapshot payload")
    values = np.frombuffer(data, "<f8", count, pos).copy()
    box = build_box(d, N, offset)
    return box, values, {"model": chr(model), "kind": kind, "seed": seed, "steps": steps, "version": version}


def write_disorder(path, sample: DisorderSample) -> None:
    name = sample.law.name.encode()
    if len(name) > 16:
        raise SnapshotError("law name too long")
    box = sample.box
    with open(path, "wb") as fh:
        fh.write(_DHEAD.pack(b"GGD1", VERSION, box.d, box.N, ord(sample.model), sample.seed & (2**64 - 1),
                             name.ljust(16, b"\0"), sample.law.scale, sample.law.kappa))
        fh.write(np.asarray(box.offset, dtype="<i4").tobytes())
        vals = np.ascontiguousarray(sample.values, dtype="<f8")
        fh.write(struct.pack("<Q", len(vals)))
        fh.write(vals.tobytes())


def read_disorder(path) -> DisorderSample:
    data = Path(path).read_bytes()
    if len(data) < _DHEAD.size or data[:4] != b"GGD1":
        raise SnapshotError("not a GGD1 disorder snapshot")
    _, version, d, N, model, seed, name, scale, kappa = _DHEAD.unpack_from(data)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    pos = _DHEAD.size
    offset = tuple(int(v) for v in np.frombuffer(data, "<i4", d, pos))
    pos += 4 * d
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) != pos + 8 * count:
        raise SnapshotError("truncated disorder payload")
    vals = np.frombuffer(data, "<f8", count, pos).copy()
    law = DisorderLaw(name.rstrip(b"\0").decode(), scale, kappa)
    return DisorderSample(chr(model), build_box(d, N, offset), law, seed, vals)


# -- CSV -------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def format_table(columns, rows, meta=None) -> str:
    buf = io.StringIO()
    meta = meta or {}
    for k, v in meta.items():
        if any(c in f"{k}{v}" for c in ";\n\r"):
            raise ValueError("metadata keys and values may not contain ';' or newlines")
    buf.write("# " + ";".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, columns, rows, meta=None) -> None:
    Path(path).write_text(format_table(columns, rows, meta), newline="")


def read_table(path):
    """Returns ``(meta, columns, rows)`` with rows as lists of strings."""
    text = Path(path).read_text()
    first, _, rest = text.partition("\n")
    if not first.startswith("#"):
        raise ValueError("missing metadata line")
    body = first[1:].strip()
    meta = dict(item.split("=", 1) for item in body.split(";")) if body else {}
    rows = list(csv.reader(io.StringIO(rest)))
    return meta, rows[0], rows[1:]


def write_disorder_csv(path, sample: DisorderSample) -> None:
    box = sample.box
    meta = {"model": sample.model, "law": sample.law.spec(), "seed": sample.seed, "d": box.d, "N": box.N}
    if sample.model == "A":
        cols = [f"x{i}" for i in range(box.d)] + ["value"]
        rows = (list(map(int, s)) + [v] for s, v in zip(box.sites, sample.values))
    else:
        tail, _, axis = box.edges
        cols = [f"x{i}" for i in range(box.d)] + ["axis", "value"]
        rows = (list(map(int, box.sites[t])) + [int(a), v] for t, a, v in zip(tail, axis, sample.values))
    write_table(path, cols, rows, meta)


def write_field_csv(path, box: LatticeBox, values, meta=None) -> None:
    cols = [f"x{i}" for i in range(box.d)] + ["phi"]
    write_table(path, cols, (list(map(int, s)) + [v] for s, v in zip(box.sites, values)), meta)


def write_energy_trace(path, energies, h: float, thin: int, meta=None) -> None:
    rows = ((k * thin, k * thin * h, e) for k, e in enumerate(energies, start=1))
    write_table(path, ["step", "time", "energy"], rows, meta)


def write_green_csv(path, table, meta=None) -> None:
    m = {"normalization": table.normalization, "d": table.domain.d, "n": table.domain.n}
    m.update(meta or {})
    write_table(path, ["x", "y", "value"],
                ((" ".join(map(str, x)), " ".join(map(str, y)), v) for x, y, v in table.rows()), m)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
