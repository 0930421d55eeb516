import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robsim.errors import FormatError
from robsim.fieldio import load_scalar, load_velocity, read_record, save_scalar, save_velocity, write_record
from robsim.grid import VelocityField


def test_header_and_index_order(tmp_path):
    a = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    save_scalar(tmp_path / "f.rob", a, "Z", 0.5)
    raw = (tmp_path / "f.rob").read_bytes()
    head, _, body = raw.partition(b"\n")
    assert head == b"ROBFIELD v1 name=Z nx=2 ny=3 nz=4 time=0.5"
    vals = np.frombuffer(body, dtype="<f8")
    # flat index (k*ny + j)*nx + i
    i, j, k = 1, 2, 3
    assert vals[(k * 3 + j) * 2 + i] == a[i, j, k]


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4),
       st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 2**32 - 1))
def test_round_trip_is_bit_exact(nx, ny, nz, t, seed):
    a = np.random.default_rng(seed).standard_normal((nx, ny, nz))
    buf = io.BytesIO()
    write_record(buf, a, "Theta", t)
    buf.seek(0)
    rec = read_record(buf)
    want = a[:, :, 0] if nz == 1 else a
    assert np.array_equal(rec.values, want) and rec.time == t and rec.name == "Theta"


def test_velocity_round_trip(tmp_path):
    r = np.random.default_rng(2)
    v = VelocityField(r.standard_normal((5, 4)), r.standard_normal((4, 5)))
    save_velocity(tmp_path / "v.rob", v, 1.25)
    w, t = load_velocity(tmp_path / "v.rob")
    assert t == 1.25 and np.array_equal(w.u1, v.u1) and np.array_equal(w.u2, v.u2)


@pytest.mark.parametrize("blob", [b"", b"NOTROB\n", b"ROBFIELD v1 name=a nx=2 ny=2 nz=1 time=0\n\x00\x00",
                                  b"ROBFIELD v1 name=a nx=2 ny=2 nz=1 time=abc\n" + bytes(32)])
def test_malformed_records(tmp_path, blob):
    p = tmp_path / "bad.rob"
    p.write_bytes(blob)
    with pytest.raises(FormatError):
        load_scalar(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "f.rob"
    save_scalar(p, np.zeros((2, 2, 2)), "x")
    p.write_bytes(p.read_bytes() + b"x")
    with pytest.raises(FormatError):
        load_scalar(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    save_scalar(tmp_path / "f.rob", np.ones((2, 2, 2)), "x")
    assert [q.name for q in tmp_path.iterdir()] == ["f.rob"]
