import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.lattice import SQRT_2PI, make_lattice, mass, random_band_limited, single_mode, zero_field
from src.spaces import (
    NormKind,
    NormSpec,
    SpaceConfigError,
    block_masses,
    equivalence_report,
    equivalence_window,
    fourier_lebesgue_norm,
    modulated_sobolev_norm,
    modulated_sobolev_report,
    modulation_norm,
    norm_report,
    scaling_check,
    sobolev_norm,
)
from src.symmetry import modulate

NORM_SPECS = [
    NormSpec(NormKind.SOBOLEV, theta=-0.5),
    NormSpec(NormKind.FOURIER_LEBESGUE, s=0.3, p=4.0),
    NormSpec(NormKind.MODULATION, s=0.2, p=3.0),
    NormSpec(NormKind.MODULATED_SOBOLEV, theta=-1.0, s=0.0, p=4.0),
]


class TestBasicNorms:
    def test_l2_cases_agree(self, dilated_field):
        l2 = dilated_field.l2_norm()
        assert sobolev_norm(dilated_field, 0.0) == pytest.approx(l2, rel=1e-14)
        assert fourier_lebesgue_norm(dilated_field, 0.0, 2.0) == pytest.approx(l2, rel=1e-14)
        assert modulation_norm(dilated_field, 0.0, 2.0) == pytest.approx(l2, rel=1e-14)

    def test_single_mode_fourier_lebesgue(self, unit_lattice):
        f = single_mode(unit_lattice, 3.0, 2.0)
        assert fourier_lebesgue_norm(f, 0.5, 4.0) == pytest.approx(2.0 * math.sqrt(10.0) ** 0.5)

    def test_fourier_lebesgue_decreases_in_p(self, small_field):
        values = [fourier_lebesgue_norm(small_field, 0.0, p) for p in (2.0, 3.0, 4.0, 8.0)]
        assert all(b <= a * (1 + 1e-14) for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("p, s", [(1.5, 0.0), (math.inf, 0.0), (2.0, -0.1)])
    def test_parameter_guards(self, small_field, p, s):
        with pytest.raises(SpaceConfigError):
            fourier_lebesgue_norm(small_field, s, p)
        with pytest.raises(SpaceConfigError):
            modulation_norm(small_field, s, p)

    def test_zero_field(self, unit_lattice):
        z = zero_field(unit_lattice)
        for spec in NORM_SPECS:
            assert norm_report(z, spec).value == 0.0

    @settings(deadline=None, max_examples=20)
    @given(
        seed=st.integers(0, 1000),
        scale=st.floats(1e-3, 1e3, allow_nan=False, allow_infinity=False),
        spec=st.sampled_from(NORM_SPECS),
    )
    def test_homogeneity(self, seed, scale, spec):
        f = random_band_limited(make_lattice(2, 4), 3, seed)
        base = norm_report(f, spec).value
        assert norm_report(f.scaled(scale * 1j), spec).value == pytest.approx(scale * base, rel=1e-9)


class TestModulationNorm:
    def test_sharp_windows(self):
        lat = make_lattice(2, 3)
        f = single_mode(lat, 0.5)
        ns, b = block_masses(f)
        assert ns[np.argmax(b)] == 1
        ns, b = block_masses(single_mode(lat, -0.5))
        assert ns[np.argmax(b)] == 0

    def test_block_masses_sum_to_mass(self, dilated_field):
        _, b = block_masses(dilated_field)
        assert math.fsum(b ** 2) == pytest.approx(mass(dilated_field), rel=1e-14)

    @settings(deadline=None, max_examples=15)
    @given(seed=st.integers(0, 1000), n=st.integers(-3, 3), lam=st.sampled_from([1, 2, 4]))
    def test_invariant_under_modulation(self, seed, n, lam):
        f = random_band_limited(make_lattice(lam, 4), 2, seed)
        g = modulate(f, n, target=make_lattice(lam, 8))
        assert modulation_norm(g, 0.0, 4.0) == pytest.approx(modulation_norm(f, 0.0, 4.0), rel=1e-12)

    def test_window_radius_guard(self, unit_lattice):
        f = single_mode(unit_lattice, 5.0)
        assert modulation_norm(f, 0.0, 2.0, window_radius=6) == pytest.approx(SQRT_2PI)
        with pytest.raises(SpaceConfigError):
            modulation_norm(f, 0.0, 2.0, window_radius=3)


class TestModulatedSobolev:
    def test_requires_negative_theta(self, small_field):
        with pytest.raises(SpaceConfigError):
            modulated_sobolev_norm(small_field, 0.0, 4.0)
        with pytest.raises(SpaceConfigError):
            NormSpec(NormKind.MODULATED_SOBOLEV, theta=0.5, p=4.0)

    def test_divergent_sum_rejected(self, small_field):
        with pytest.raises(SpaceConfigError):
            modulated_sobolev_norm(small_field, -0.2, 2.0)

    def test_tail_is_small_and_reported(self, small_field):
        rep = modulated_sobolev_report(small_field, -1.0, 4.0)
        assert rep.kind is NormKind.MODULATED_SOBOLEV
        assert 0.0 <= rep.tail_estimate < 1e-6 * rep.value

    def test_window_radius_below_support(self, small_field):
        with pytest.raises(SpaceConfigError):
            modulated_sobolev_norm(small_field, -1.0, 4.0, window_radius=1)

    def test_margin_convergence(self, small_field):
        a = modulated_sobolev_norm(small_field, -1.0, 4.0, margin=64)
        b = modulated_sobolev_norm(small_field, -1.0, 4.0, margin=512)
        assert a == pytest.approx(b, rel=1e-8)


class TestEquivalence:
    def test_window_bounds(self):
        lo, hi = equivalence_window(-1.0, 0.0)
        assert lo == pytest.approx(1.25 ** -0.5)
        assert 1.0 < hi < 10.0
        with pytest.raises(SpaceConfigError):
            equivalence_window(-0.4, 0.0)

    def test_corpus_ratios_inside_window(self, corpus):
        rep = equivalence_report(corpus, -1.0, 4.0)
        assert rep.within_window
        assert rep.skipped == 0
        assert len(rep.ratios) == len(corpus)
        assert sorted(rep.per_lambda) == [1, 2, 4]
        assert rep.window[0] <= rep.ratio_min <= rep.ratio_mean <= rep.ratio_max <= rep.window[1]

    def test_weighted_corpus(self, corpus):
        rep = equivalence_report(corpus, -1.2, 4.0, s=0.3, max_workers=2)
        assert rep.within_window

    @pytest.mark.parametrize("theta, s", [(-1.0, 0.0), (-1.0, 0.25)])
    def test_large_corpus_is_stable_in_lambda(self, theta, s):
        fields = []
        for i in range(100):
            lam = (1, 2, 4)[i % 3]
            fields.append(random_band_limited(make_lattice(lam, 6), 3, seed=1000 + i, amplitude=0.2))
        rep = equivalence_report(fields, theta, 4.0, s=s, max_workers=4)
        assert len(rep.ratios) == 100
        assert rep.within_window
        assert rep.spread <= 10.0
        by_lam = {}
        for f, r in zip(fields, rep.ratios):
            by_lam.setdefault(f.lam, []).append(r)
        for lam, ratios in by_lam.items():
            assert np.mean(ratios) == pytest.approx(rep.ratio_mean, rel=0.2), lam

    def test_single_mode_ratio(self, unit_lattice):
        f = single_mode(unit_lattice, 0.0, 0.3)
        ratio = modulated_sobolev_norm(f, -1.0, 2.0) / modulation_norm(f, 0.0, 2.0)
        assert ratio == pytest.approx(math.sqrt(math.pi / math.tanh(math.pi)), rel=1e-8)

    def test_zero_fields_skipped(self, corpus):
        rep = equivalence_report([zero_field(corpus[0].lattice), *corpus[:2]], -1.0, 4.0)
        assert rep.skipped == 1
        assert len(rep.ratios) == 2


class TestScaling:
    @pytest.mark.parametrize("lam", [1, 2, 8])
    def test_fourier_lebesgue_identity(self, small_field, lam):
        rep = scaling_check(small_field, lam, 4.0)
        assert rep.fl_identity_error < 1e-12
        assert rep.c_upper > 0 and rep.c_lower > 0

    def test_large_lambda_collapses_blocks(self):
        f = random_band_limited(make_lattice(1, 3), 3, seed=4)
        rep = scaling_check(f, 16, 4.0)
        # every mode sits in the n = 0 window, so the M norm is an l^2 mass
        assert rep.mod_scaled == pytest.approx(math.sqrt(mass(f) / 16), rel=1e-12)

    def test_constants_uniform_in_lambda(self, small_field):
        c = [scaling_check(small_field, lam, 4.0).c_upper for lam in (2, 4, 8)]
        assert max(c) / min(c) < 2.0

    def test_rejects_non_integer_lambda(self, small_field):
        with pytest.raises(SpaceConfigError):
            scaling_check(small_field, 1.5, 4.0)
        with pytest.raises(SpaceConfigError):
            scaling_check(small_field, 0, 4.0)
