import numpy as np
import pytest

from jointrecon import io as fio
from jointrecon.simulate import MaskSpec, PhantomSpec, make_mask, make_phantom, simulate_kspace
from jointrecon.types import Grid


@pytest.fixture
def data():
    g = Grid(16, 12)
    u, _, _ = make_phantom(PhantomSpec(kind="disks", grid=g))
    return simulate_kspace(u, make_mask(MaskSpec(rate=0.3, seed=2), g), 0.1, seed=3)


def test_kspace_round_trip(tmp_path, data):
    path = tmp_path / "d.ksp"
    fio.write_kspace(path, data)
    back = fio.read_kspace(path)
    assert back.samples.tobytes() == data.samples.tobytes()
    assert np.array_equal(back.mask.selected, data.mask.selected)
    assert back.noise_sigma == data.noise_sigma
    assert path.stat().st_size == 24 + 20 * data.m


def test_kspace_truncated_names_record(tmp_path, data):
    path = tmp_path / "d.ksp"
    fio.write_kspace(path, data)
    raw = path.read_bytes()
    path.write_bytes(raw[: 24 + 20 * 5 + 7])
    with pytest.raises(fio.FormatError) as err:
        fio.read_kspace(path)
    assert err.value.record == 5
    assert err.value.offset == 24 + 20 * 5
    assert "record 5" in str(err.value)


def test_kspace_bad_magic(tmp_path, data):
    path = tmp_path / "d.ksp"
    fio.write_kspace(path, data)
    path.write_bytes(b"XSP1" + path.read_bytes()[4:])
    with pytest.raises(fio.FormatError) as err:
        fio.read_kspace(path)
    assert err.value.offset == 0


def test_kspace_truncated_header(tmp_path):
    path = tmp_path / "d.ksp"
    path.write_bytes(b"KSP1\x04\x00")
    with pytest.raises(fio.FormatError) as err:
        fio.read_kspace(path)
    assert err.value.offset == 6


def test_kspace_trailing_bytes(tmp_path, data):
    path = tmp_path / "d.ksp"
    fio.write_kspace(path, data)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(fio.FormatError):
        fio.read_kspace(path)


def test_pgm_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(-1, 3, (7, 9))
    lo, hi = fio.write_pgm16(tmp_path / "a.pgm", img)
    px = fio.read_pgm16(tmp_path / "a.pgm")
    assert px.shape == img.shape and px.min() == 0 and px.max() == 65535
    assert np.max(np.abs(fio.pgm_to_float(px, lo, hi) - img)) <= (hi - lo) / 65535


def test_pgm_constant_image(tmp_path):
    img = np.full((5, 4), 0.7)
    entry = fio.write_image(tmp_path / "c", img)
    px = fio.read_pgm16(tmp_path / "c.pgm")
    back = fio.pgm_to_float(px, float(entry["lo"]), float(entry["hi"]))
    assert np.all(back == 0.7)
    assert np.array_equal(fio.read_raw(tmp_path / "c.f64", img.shape), img)


def test_raw_sidecar_exact(tmp_path):
    img = np.random.default_rng(1).normal(size=(6, 6))
    fio.write_image(tmp_path / "r", img)
    assert fio.read_raw(tmp_path / "r.f64", img.shape).tobytes() == img.tobytes()
    with pytest.raises(fio.FormatError):
        fio.read_raw(tmp_path / "r.f64", (5, 5))


def test_pgm_bad_magic(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(fio.FormatError):
        fio.read_pgm16(tmp_path / "x.pgm")
