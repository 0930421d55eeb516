"""Reading and writing ROBFIELD records.

A record is one ASCII header line

    ROBFIELD v1 name=<tag> nx=<int> ny=<int> nz=<int> time=<float>

followed by ``nx*ny*nz`` little-endian float64 values with ``i`` varying
fastest. Velocity snapshots are two consecutive records (``u1``, ``u2``).
"""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import ScalarField, VelocityField

_HEADER = re.compile(
    r"^ROBFIELD v1 name=(?P<name>\S+) nx=(?P<nx>\d+) ny=(?P<ny>\d+) nz=(?P<nz>\d+) time=(?P<time>\S+)$"
)


def format_float(x: float) -> str:
    return repr(float(x))


def write_record(fh, values: np.ndarray, name: str, time: float = 0.0) -> None:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    nx, ny, nz = a.shape
    header = f"ROBFIELD v1 name={name} nx={nx} ny={ny} nz={nz} time={format_float(time)}\n"
    fh.write(header.encode("ascii"))
    fh.write(a.ravel(order="F").astype("<f8").tobytes())


def read_record(fh) -> ScalarField:
    line = fh.readline()
    if not line:
        raise FormatError("unexpected end of file, expected ROBFIELD header")
    try:
        text = line.decode("ascii").rstrip("\n")
    except UnicodeDecodeError as exc:
        raise FormatError("ROBFIELD header is not ASCII") from exc
    m = _HEADER.match(text)
    if m is None:
        raise FormatError(f"bad ROBFIELD header: {text[:80]!r}")
    nx, ny, nz = int(m["nx"]), int(m["ny"]), int(m["nz"])
    try:
        time = float(m["time"])
    except ValueError as exc:
        raise FormatError(f"bad time value {m['time']!r}") from exc
    nbytes = nx * ny * nz * 8
    raw = fh.read(nbytes)
    if len(raw) != nbytes:
        raise FormatError(f"truncated ROBFIELD payload for {m['name']}")
    a = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape((nx, ny, nz), order="F")
    if nz == 1:
        a = a[:, :, 0]
    return ScalarField(a.copy(), name=m["name"], time=time)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary sibling file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _Buffer:
    def __init__(self):
        self.parts = []

    def write(self, b):
        self.parts.append(b)

    def getvalue(self):
        return b"".join(self.parts)


def save_scalar(path, values: np.ndarray, name: str, time: float = 0.0) -> None:
    buf = _Buffer()
    write_record(buf, values, name, time)
    atomic_write_bytes(path, buf.getvalue())


def load_scalar(path) -> ScalarField:
    with open(path, "rb") as fh:
        rec = read_record(fh)
        if fh.read(1):
            raise FormatError(f"{path}: trailing data after ROBFIELD record")
    return rec


def save_velocity(path, v: VelocityField, time: float = 0.0) -> None:
    buf = _Buffer()
    write_record(buf, v.u1, "u1", time)
    write_record(buf, v.u2, "u2", time)
    atomic_write_bytes(path, buf.getvalue())


def load_velocity(path) -> tuple[VelocityField, float]:
    with open(path, "rb") as fh:
        r1 = read_record(fh)
        r2 = read_record(fh)
    if (r1.name, r2.name) != ("u1", "u2"):
        raise FormatError(f"{path}: expected u1,u2 records, got {r1.name},{r2.name}")
    return VelocityField(r1.values, r2.values), r1.time
