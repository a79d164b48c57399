import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.determinant import (
    MAX_KERNEL_MODES,
    KernelError,
    KernelSizeError,
    SeriesDivergenceError,
    alpha,
    alpha_csv_header,
    alpha_terms_discrepancy,
    build_kernel,
    conservation_drift,
    hs_double_sum,
    hs_norm_sq,
    hs_report,
    leading_term,
    periodization_factor,
    require_usable,
    series_tail,
)
from src.flow import FlowSpec, evolve
from src.lattice import SQRT_2PI, make_lattice, random_band_limited, single_mode, zero_field
from src.models.models import NLS, MKdV, MKdVNLS, RenormalizedNLS
from src.symmetry import modulate
from src.utilis import NumericalGuardError


class TestKernel:
    def test_kappa_must_have_positive_real_part(self, small_field):
        for kappa in (0.0, -0.5, 0.3j):
            with pytest.raises(KernelError):
                build_kernel(small_field, kappa)

    def test_partner_moduli_match_for_real_kappa(self, dilated_field):
        op = build_kernel(dilated_field, 0.5)
        np.testing.assert_allclose(np.abs(op.partner), np.abs(op.matrix).T, rtol=1e-13)

    def test_zero_field(self, unit_lattice):
        res = alpha(zero_field(unit_lattice))
        assert res.value == 0.0
        assert res.hs_norm_sq == 0.0
        assert res.smallness_ok and res.usable
        assert res.tail_bound == 0.0

    @pytest.mark.parametrize("lam", [1, 2, 4])
    def test_hilbert_schmidt_double_sum(self, lam):
        u = random_band_limited(make_lattice(lam, 6), 3, seed=lam, amplitude=0.3)
        assert hs_norm_sq(build_kernel(u)) == pytest.approx(hs_double_sum(u), rel=1e-12)
        assert hs_report(u).identity_error < 1e-12

    def test_log_weighted_comparison(self, corpus):
        ratios = [hs_report(u).ratio for u in corpus]
        assert all(0.0 < r < 10.0 for r in ratios)
        assert max(ratios) / min(ratios) < 10.0

    @pytest.mark.parametrize("n", [-3, 2, 5])
    def test_shift_reindexes_modulated_kernel(self, small_field, n):
        k = small_field.lattice.half_width
        wide = make_lattice(1, small_field.lattice.cutoff + abs(n))
        kw = wide.half_width
        full = build_kernel(modulate(small_field, n, target=wide), 0.5)
        op = build_kernel(small_field, 0.5, shift=n)
        assert op.shift == n
        rows = np.arange(-k, k + 1) - n + kw
        cols = np.arange(-k, k + 1) + kw
        np.testing.assert_allclose(op.matrix, full.matrix[np.ix_(rows, cols)], rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(op.partner, full.partner[np.ix_(cols, rows)], rtol=1e-12, atol=1e-300)

    def test_shift_must_be_integer(self, small_field):
        with pytest.raises(KernelError):
            build_kernel(small_field, 0.5, shift=0.5)

    def test_mode_cap(self, small_field):
        with pytest.raises(KernelSizeError) as err:
            build_kernel(small_field, 0.5, max_modes=10)
        assert isinstance(err.value, NumericalGuardError)
        with pytest.raises(KernelSizeError):
            alpha(small_field, 0.5, J=2, max_modes=10)
        assert small_field.lattice.mode_count <= MAX_KERNEL_MODES


class TestLeadingTerm:
    def test_plane_wave_value(self, plane_wave):
        coth = (1 + math.exp(-math.pi)) / (1 - math.exp(-math.pi))
        expected = coth * 2 * math.pi * 0.01 / 5
        assert leading_term(plane_wave, 0.5) == pytest.approx(expected, rel=1e-14)
        assert leading_term(plane_wave, 0.5) == pytest.approx(0.013701, abs=5e-6)

    def test_plane_wave_matrix_mode(self):
        u = single_mode(make_lattice(1, 64), 2.0, 0.1 * SQRT_2PI)
        closed = leading_term(u, 0.5, "closed_form")
        assert leading_term(u, 0.5, "matrix") == pytest.approx(closed, rel=1e-10)
        assert leading_term(u, 0.5, "matrix", tail_correct=False) < closed

    @pytest.mark.parametrize("lam, cutoff", [(1, 12), (2, 6), (4, 3)])
    def test_matrix_matches_closed_form(self, lam, cutoff):
        u = random_band_limited(make_lattice(lam, cutoff), cutoff / 2, seed=3, amplitude=0.2)
        assert leading_term(u, 0.5, "matrix") == pytest.approx(leading_term(u, 0.5), rel=1e-10)

    def test_zero_field(self, unit_lattice):
        assert leading_term(zero_field(unit_lattice)) == 0.0

    @pytest.mark.parametrize("n", [-3, -1, 0, 2])
    def test_complex_kappa_shift(self, small_field, n):
        kappa = complex(0.5, n / 2)
        ratio = periodization_factor(1, kappa) / periodization_factor(1, 0.5)
        shifted = modulate(small_field, n, target=make_lattice(1, 20))
        assert leading_term(small_field, kappa) == pytest.approx(ratio * leading_term(shifted, 0.5), rel=1e-12)
        assert leading_term(small_field, kappa, "matrix") == pytest.approx(leading_term(small_field, kappa), rel=1e-10)

    @pytest.mark.parametrize("n", [-4, 1, 3])
    def test_shifted_leading_term(self, small_field, n):
        wide = make_lattice(1, small_field.lattice.cutoff + abs(n))
        modulated = leading_term(modulate(small_field, n, target=wide), 0.5)
        assert leading_term(small_field, 0.5, shift=n) == pytest.approx(modulated, rel=1e-12)
        assert leading_term(small_field, 0.5, "matrix", shift=n) == pytest.approx(modulated, rel=1e-10)
        assert alpha(small_field, 0.5, J=3, shift=n).terms[0] == pytest.approx(modulated, rel=1e-10)

    def test_off_lattice_shift(self, small_field, dilated_field):
        with pytest.raises(KernelError):
            leading_term(small_field, complex(0.5, 0.3))
        assert leading_term(dilated_field, complex(0.5, 0.125)) > 0
        with pytest.raises(KernelError):
            leading_term(small_field, 0.5, mode="series")

    def test_periodization_factor(self):
        x = math.pi * 0.5
        assert periodization_factor(1, 0.5) == pytest.approx(1 / math.tanh(x))
        assert periodization_factor(1, 0.5 + 0.5j) == pytest.approx(math.tanh(x))
        assert periodization_factor(2, 0.5 + 0.5j) == pytest.approx(1 / math.tanh(2 * x))


class TestAlpha:
    def test_first_term_is_leading_term(self, small_field):
        res = alpha(small_field, 0.5, J=4)
        assert len(res.terms) == 4
        assert res.terms[0] == pytest.approx(leading_term(small_field, 0.5, "matrix"), rel=1e-14)
        assert res.value == pytest.approx(math.fsum(res.terms))

    def test_sign_weights(self, small_field):
        d = alpha(small_field, 0.5, J=4, sign="defocusing")
        f = alpha(small_field, 0.5, J=4, sign="focusing")
        assert f.terms[0] == pytest.approx(d.terms[0])
        assert f.terms[1] == pytest.approx(-d.terms[1])
        assert f.terms[2] == pytest.approx(d.terms[2])

    @pytest.mark.parametrize("method", ["direct", "eig"])
    def test_methods_agree(self, dilated_field, method):
        ref = alpha(dilated_field, 0.5, J=6)
        res = alpha(dilated_field, 0.5, J=6, method=method)
        assert res.value == pytest.approx(ref.value, rel=1e-10)

    def test_torch_backend(self, dilated_field):
        pytest.importorskip("torch")
        ref = alpha(dilated_field, 0.5, J=5)
        for method in ("direct", "eig"):
            res = alpha(dilated_field, 0.5, J=5, method=method, backend="torch")
            assert res.value == pytest.approx(ref.value, rel=1e-10)

    def test_unknown_options(self, small_field):
        with pytest.raises(KernelError):
            alpha(small_field, backend="jax")
        with pytest.raises(KernelError):
            alpha(small_field, method="lanczos")
        with pytest.raises(KernelError):
            alpha(small_field, J=0)

    @settings(deadline=None, max_examples=15)
    @given(scale=st.floats(0.1, 10.0, allow_nan=False), seed=st.integers(0, 500))
    def test_ratio_is_quadratic(self, scale, seed):
        u = random_band_limited(make_lattice(2, 4), 2, seed, amplitude=0.05)
        base = alpha(u, 0.5, J=2)
        res = alpha(u.scaled(scale), 0.5, J=2)
        assert res.hs_norm_sq == pytest.approx(scale ** 2 * base.hs_norm_sq, rel=1e-10)
        assert res.ratio == pytest.approx(scale ** 2 * base.ratio, rel=1e-10)

    def test_hs_norm_and_ratio_fields(self, small_field):
        real = alpha(small_field, 0.5, J=2)
        assert real.hs_norm_sq == pytest.approx(hs_norm_sq(build_kernel(small_field, 0.5)), rel=1e-14)
        assert real.ratio == pytest.approx(real.hs_norm_sq, rel=1e-12)
        shifted = alpha(small_field, complex(0.5, 1.5), J=2)
        op = build_kernel(small_field, complex(0.5, 1.5))
        hs_b = math.fsum(np.abs(op.partner.ravel()) ** 2)
        assert shifted.hs_norm_sq == pytest.approx(hs_norm_sq(op), rel=1e-14)
        assert shifted.ratio == pytest.approx(math.sqrt(hs_norm_sq(op) * hs_b), rel=1e-12)
        # |B^T| = |A| entrywise, so the two norms coincide off the real axis too
        assert shifted.ratio == pytest.approx(shifted.hs_norm_sq, rel=1e-12)
        assert shifted.margin == pytest.approx(shifted.c0 - shifted.ratio)

    @pytest.mark.parametrize("eps", [0.5, 0.1])
    def test_terms_scale_with_amplitude(self, dilated_field, eps):
        base = alpha(dilated_field, 0.5, J=4)
        res = alpha(dilated_field.scaled(eps), 0.5, J=4)
        for j in range(1, 5):
            assert res.terms[j - 1] == pytest.approx(eps ** (2 * j) * base.terms[j - 1], rel=1e-8)

    @pytest.mark.parametrize("J", [1, 2, 5, 8])
    def test_split_powers_match_eigenvalues(self, dilated_field, J):
        u = dilated_field.scaled(3.0)
        direct = alpha(u, complex(0.5, 0.25), J=J)
        eig = alpha(u, complex(0.5, 0.25), J=J, method="eig")
        np.testing.assert_allclose(direct.terms[1:], eig.terms[1:], rtol=1e-9, atol=1e-12 * abs(direct.terms[0]))

    def test_divergent_series_is_flagged(self, small_field):
        res = alpha(small_field.scaled(200.0), 0.5, J=3)
        assert not res.usable
        assert not res.smallness_ok
        assert math.isinf(res.tail_bound)
        with pytest.raises(SeriesDivergenceError):
            require_usable(res)

    def test_smallness_threshold(self, small_field):
        res = alpha(small_field, 0.5, J=3, c0=1e-9)
        assert res.usable
        assert not res.smallness_ok
        assert res.margin < 0

    def test_csv_row_layout(self, small_field):
        res = alpha(small_field, 0.5, J=3)
        header = alpha_csv_header(3)
        row = res.as_row(0.25)
        assert len(row) == len(header)
        assert header[:5] == ["time", "kappa_re", "kappa_im", "J", "value"]
        assert row[0] == 0.25


class TestSeriesTail:
    def test_limits(self):
        assert series_tail(0.0, 4) == 0.0
        assert math.isinf(series_tail(1.0, 4))

    @pytest.mark.parametrize("r", [0.05, 0.3, 0.8])
    def test_matches_direct_sum(self, r):
        direct = math.fsum(r ** j / j for j in range(5, 2000))
        assert series_tail(r, 4) == pytest.approx(direct, rel=1e-9)

    def test_bounds_truncation_error(self, small_field):
        res = alpha(small_field, 0.5, J=2)
        full = alpha(small_field, 0.5, J=12)
        assert abs(full.value - res.value) <= res.tail_bound


class TestDiscrepancy:
    def test_no_shift_no_discrepancy(self, small_field):
        d = alpha_terms_discrepancy(small_field, 0, J=3)
        assert max(d.abs_diff) < 1e-14

    def test_leading_order_reindexes(self):
        u = random_band_limited(make_lattice(2, 6), 2, seed=8, amplitude=0.1)
        d = alpha_terms_discrepancy(u, 2, J=3)
        assert d.abs_diff[0] < 1e-9 * abs(d.modulated_terms[0])


class TestConservationDrift:
    def test_nls_small_data(self, small_field):
        traj = evolve(small_field, FlowSpec(NLS(), dt=1e-3), 0.2, [0.0, 0.1, 0.2])
        drift = conservation_drift(traj, 0.5, J=6, max_workers=2)
        assert drift.unverifiable == 0
        assert drift.max_rel_drift < 1e-3
        assert drift.min_margin > 0

    def test_mkdv_small_data(self, small_field):
        traj = evolve(small_field, FlowSpec(MKdV(), dt=1e-3, integrator="ifrk4"), 0.1, [0.0, 0.05, 0.1])
        drift = conservation_drift(traj, 0.5, J=6)
        assert drift.max_rel_drift < 1e-3

    @pytest.mark.parametrize(
        "equation, integrator, mass_tol",
        [
            (NLS(), "strang", 1e-10),
            (RenormalizedNLS(), "strang", 1e-10),
            (MKdV(), "ifrk4", 1e-7),
            (MKdVNLS(beta=1), "ifrk4", 1e-7),
        ],
    )
    def test_unit_time_at_small_mass(self, equation, integrator, mass_tol):
        u0 = random_band_limited(make_lattice(1, 8), 2, seed=4)
        u0 = u0.scaled(0.05 / u0.l2_norm())
        spec = FlowSpec(equation, dt=1e-3, integrator=integrator)
        traj = evolve(u0, spec, 1.0, [0.0, 0.25, 0.5, 0.75, 1.0])
        drift = conservation_drift(traj, 0.5, J=8)
        assert drift.unverifiable == 0
        assert drift.max_rel_drift <= 1e-4
        assert traj.mass_drift() <= mass_tol

    def test_unverifiable_snapshots_are_kept(self, small_field):
        traj = evolve(small_field, FlowSpec(NLS(), dt=1e-3), 0.01)
        drift = conservation_drift(traj, 0.5, J=3, c0=1e-9)
        assert drift.unverifiable == len(traj.snapshots)
        assert len(drift.values) == len(traj.snapshots)
        assert drift.max_rel_drift == 0.0
