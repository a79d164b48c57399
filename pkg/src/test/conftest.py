import numpy as np
import pytest

from src.lattice import SQRT_2PI, make_lattice, random_band_limited, single_mode


@pytest.fixture
def unit_lattice():
    return make_lattice(1, 16)


@pytest.fixture
def small_field(unit_lattice):
    """Band-limited field on T with support |xi| <= 2."""
    return random_band_limited(unit_lattice, 2, seed=1, amplitude=0.1)


@pytest.fixture
def dilated_field():
    return random_band_limited(make_lattice(4, 4), 2, seed=2, amplitude=0.1)


@pytest.fixture
def plane_wave(unit_lattice):
    """0.1 e^{2ix} on the unit torus."""
    return single_mode(unit_lattice, 2.0, 0.1 * SQRT_2PI)


@pytest.fixture
def corpus():
    fields = []
    for lam in (1, 2, 4):
        lat = make_lattice(lam, 6)
        for seed in range(3):
            fields.append(random_band_limited(lat, 3, seed=10 * lam + seed, amplitude=0.2))
    return fields


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECTRAL_LAB_OUTPUT", str(tmp_path / "result"))
    return tmp_path / "result"


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale
