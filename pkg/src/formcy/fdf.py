"""Reader and writer for the ``FDF1`` field dump format.

Layout: an ASCII header of ``key = value`` lines opened by the magic line
``FDF1`` and closed by ``end``, followed by little-endian IEEE-754 doubles
stored as interleaved ``(re, im)`` pairs in row-major grid order.  Matrix
fields store one full grid plane per entry, entries ordered ``(i, j)``
row-major.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .torus import FieldError, ScalarField, TorusGeometry

MAGIC = "FDF1"
KINDS = ("scalar", "real", "hermitian", "metric", "psi")


class FDFError(FieldError):
    pass


@dataclass(frozen=True)
class Dump:
    geometry: TorusGeometry
    kind: str
    data: np.ndarray  # grid_shape for scalars, grid_shape + (n, n) for matrices


def write(path: str | os.PathLike, geometry: TorusGeometry, kind: str, data: np.ndarray) -> None:
    if kind not in KINDS:
        raise FDFError(f"unknown field kind {kind!r}")
    data = np.asarray(data, dtype=complex)
    matrix = kind in ("hermitian", "metric", "psi")
    expected = geometry.grid_shape + ((geometry.n, geometry.n) if matrix else ())
    if data.shape != expected:
        raise FDFError(f"data shape {data.shape} does not match {expected}")
    planes = np.moveaxis(data, (-2, -1), (0, 1)).reshape(-1, *geometry.grid_shape) if matrix \
        else data[None]
    header = "\n".join([
        MAGIC,
        f"n = {geometry.n}",
        "active_axes = " + " ".join(map(str, geometry.active_axes)),
        "grid_shape = " + " ".join(map(str, geometry.grid_shape)),
        f"kind = {kind}",
        f"planes = {planes.shape[0]}",
        "end",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(planes, dtype="<c16").tobytes())


def read(path: str | os.PathLike) -> Dump:
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = []
    offset = 0
    while True:
        stop = raw.find(b"\n", offset)
        if stop < 0:
            raise FDFError(f"{path}: truncated header")
        line = raw[offset:stop].decode("ascii", errors="replace").strip()
        offset = stop + 1
        if line == "end":
            break
        lines.append(line)
        if len(lines) > 64:
            raise FDFError(f"{path}: header too long")
    if not lines or lines[0] != MAGIC:
        raise FDFError(f"{path}: missing {MAGIC} magic")
    meta = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise FDFError(f"{path}: malformed header line {line!r}")
        meta[key.strip()] = value.strip()
    try:
        geometry = TorusGeometry(
            int(meta["n"]),
            tuple(int(v) for v in meta["active_axes"].split()),
            tuple(int(v) for v in meta["grid_shape"].split()),
        )
        kind = meta["kind"]
        nplanes = int(meta["planes"])
    except KeyError as exc:
        raise FDFError(f"{path}: header lacks {exc.args[0]!r}") from None
    except ValueError as exc:  # also covers FieldError from an invalid geometry
        raise FDFError(f"{path}: bad header value: {exc}") from None
    if kind not in KINDS:
        raise FDFError(f"{path}: unknown kind {kind!r}")
    expected = nplanes * geometry.npoints
    if len(raw) - offset != 16 * expected:
        raise FDFError(f"{path}: expected {expected} samples, got {(len(raw) - offset) / 16:g}")
    payload = np.frombuffer(raw, dtype="<c16", offset=offset)
    planes = payload.astype(complex).reshape(nplanes, *geometry.grid_shape)
    if kind in ("hermitian", "metric", "psi"):
        n = geometry.n
        if nplanes != n * n:
            raise FDFError(f"{path}: matrix field needs {n * n} planes")
        data = np.moveaxis(planes.reshape(n, n, *geometry.grid_shape), (0, 1), (-2, -1))
    else:
        if nplanes != 1:
            raise FDFError(f"{path}: scalar field needs one plane")
        data = planes[0]
    return Dump(geometry, kind, np.ascontiguousarray(data))


def write_scalar(path, f: ScalarField) -> None:
    write(path, f.geometry, "real" if f.real else "scalar", f.samples)


def read_scalar(path) -> ScalarField:
    dump = read(path)
    if dump.kind not in ("scalar", "real"):
        raise FDFError(f"{path}: expected a scalar field, found {dump.kind}")
    return ScalarField(dump.geometry, dump.data, real=dump.kind == "real")
