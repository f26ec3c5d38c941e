import struct

import numpy as np
import pytest

from stochgfd.grid import PeriodicGrid, SpectralScalarField
from stochgfd.snapshot import SnapshotFormatError, read_components, read_field, read_raw, write_field, write_raw


def test_raw_layout(tmp_path):
    a = np.arange(8 * 10, dtype=float).reshape(8, 10) * 0.5
    p = tmp_path / "a.gfsf"
    write_raw(p, a)
    data = p.read_bytes()
    assert data[:4] == b"GFSF"
    assert struct.unpack_from("<IIII", data, 4) == (1, 2, 8, 10)
    assert np.frombuffer(data[20:], "<f8")[3] == 1.5
    assert np.array_equal(read_raw(p), a)


def test_bad_files(tmp_path):
    p = tmp_path / "bad.gfsf"
    p.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(SnapshotFormatError):
        read_raw(p)
    write_raw(p, np.zeros((8, 8)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SnapshotFormatError):
        read_raw(p)


def test_field_round_trip(tmp_path):
    g = PeriodicGrid((8, 16), (1.0, 3.0))
    f = SpectralScalarField(g, np.random.default_rng(0).standard_normal(g.shape))
    write_field(tmp_path, "f", f, {"time": 0.25, "grade": "scalar"})
    back, meta = read_field(tmp_path / "f.json")
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    assert meta["time"] == 0.25 and meta["grade"] == "scalar"
    g2, comps, _ = read_components(tmp_path / "f.json")
    assert len(comps) == 1 and g2 == g
