"""
Perturbation-determinant engine on dilated tori.

Provides:
- KernelOperator, AlphaResult, HSReport, DriftReport, KernelError
- build_kernel(u, kappa, shift) -> KernelOperator (A and its partner B)
- hs_norm_sq(op), hs_double_sum(u, kappa), log_weighted_sum(u, kappa), hs_report(u, kappa)
- leading_term(u, kappa, mode="closed_form" | "matrix", shift)
- alpha(u, kappa, J, sign, ..., shift) -> AlphaResult
- KernelSizeError
- alpha_terms_discrepancy(u, n, J)
- conservation_drift(traj, kappa, J) -> DriftReport
- alpha_csv_header(J)

With xi, eta on the truncated lattice,

    A[xi, eta] = u^(xi - eta)        / (sqrt(2 pi) lam sqrt(kappa - i xi) sqrt(kappa + i eta))
    B[xi, eta] = conj u^(eta - xi)   / (sqrt(2 pi) lam sqrt(kappa + i xi) sqrt(kappa - i eta))

and alpha = Re sum_j (-s)^{j-1} / j tr((AB)^j), s = +1 for the defocusing sign.

shift = n evaluates the kernel of M_n u without widening the lattice: with
u^_n(xi) = u^(xi + n), the rows of A (columns of B) are re-indexed by xi -> xi - n,
so the coefficients stay those of u and only the kappa - i xi factors move.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import TYPE_CHECKING, Any, List

import numpy as np
from scipy import linalg, special

from src.lattice import SQRT_2PI, FrequencyLattice, SpectralField, embed, make_lattice
from src.models.models import Sign
from src.utilis import NumericalGuardError, get_logger

if TYPE_CHECKING:
    from src.flow import Trajectory

log = get_logger("determinant")

DEFAULT_KAPPA = 0.5
DEFAULT_J = 8
DEFAULT_C0 = 0.25
MAX_KERNEL_MODES = 4096


class KernelError(ValueError):
    """Invalid spectral parameter or unsupported kernel configuration."""


class SeriesDivergenceError(NumericalGuardError):
    """Raised by callers that require a usable (r < 1) trace series."""


class KernelSizeError(NumericalGuardError):
    """The dense kernel would exceed the configured mode count."""


def _check_kappa(kappa: complex) -> complex:
    kappa = complex(kappa)
    if not kappa.real > 0:
        raise KernelError(f"Re(kappa) must be > 0, got {kappa}")
    return kappa


def _check_shift(shift: int) -> int:
    if isinstance(shift, bool) or int(shift) != shift:
        raise KernelError(f"shift must be an integer, got {shift}")
    return int(shift)


@dataclass(frozen=True)
class KernelOperator:
    lattice: FrequencyLattice
    kappa: complex
    matrix: np.ndarray = dc_field(repr=False)
    partner: np.ndarray = dc_field(repr=False)
    shift: int = 0

    def product(self) -> np.ndarray:
        return self.matrix @ self.partner


def _toeplitz_pair(u: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    """T[a, b] = u^(xi_a - xi_b) and S[a, b] = conj u^(xi_b - xi_a)."""
    k = u.lattice.half_width
    c = np.asarray(u.coeffs)
    pad = np.zeros(k, dtype=np.complex128)
    col = np.concatenate([c[k:], pad])
    row = np.concatenate([c[k::-1], pad])
    t = linalg.toeplitz(col, row)
    return t, t.conj().T


def build_kernel(
    u: SpectralField,
    kappa: complex = DEFAULT_KAPPA,
    shift: int = 0,
    max_modes: int | None = None,
) -> KernelOperator:
    kappa = _check_kappa(kappa)
    shift = _check_shift(shift)
    size = u.lattice.mode_count
    if max_modes is not None and size > max_modes:
        raise KernelSizeError(f"kernel needs {size} modes > cap {max_modes} (lam={u.lam}, cutoff={u.lattice.cutoff})")
    xi = u.lattice.modes()
    minus = np.sqrt(kappa - 1j * (xi - shift))
    plus = np.sqrt(kappa + 1j * xi)
    t, s = _toeplitz_pair(u)
    norm = SQRT_2PI * u.lam
    a = t / (norm * minus[:, None] * plus[None, :])
    b = s / (norm * plus[:, None] * minus[None, :])
    return KernelOperator(u.lattice, kappa, a, b, shift)


def hs_norm_sq(op: KernelOperator) -> float:
    return math.fsum(np.abs(op.matrix.ravel()) ** 2)


def hs_double_sum(u: SpectralField, kappa: complex = DEFAULT_KAPPA) -> float:
    """(2 pi lam^2)^{-1} sum_{xi, eta} |u^(xi - eta)|^2 / (|kappa - i xi| |kappa + i eta|)."""
    kappa = _check_kappa(kappa)
    lat = u.lattice
    k = lat.half_width
    idx = lat.indices()
    total: List[float] = []
    for d in np.nonzero(u.coeffs)[0] - k:
        eta = idx[max(-k, -k - d) + k:min(k, k - d) + k + 1]
        w = 1.0 / (np.abs(kappa - 1j * (eta + d) / lat.lam) * np.abs(kappa + 1j * eta / lat.lam))
        total.append(abs(u.coeffs[d + k]) ** 2 * math.fsum(w))
    return math.fsum(total) / (2.0 * math.pi * lat.lam ** 2)


def log_weighted_sum(u: SpectralField, kappa: complex = DEFAULT_KAPPA) -> float:
    """lam^{-1} sum_xi log(4 + xi^2 / k^2) |u^(xi)|^2 / sqrt(4 k^2 + xi^2), k = Re kappa."""
    kr = _check_kappa(kappa).real
    xi = u.lattice.modes()
    w = np.log(4.0 + xi ** 2 / kr ** 2) / np.sqrt(4.0 * kr ** 2 + xi ** 2)
    return math.fsum(w * np.abs(u.coeffs) ** 2) / u.lam


@dataclass(frozen=True)
class HSReport:
    hs_norm_sq: float
    double_sum: float
    log_weighted: float

    @property
    def ratio(self) -> float:
        return self.hs_norm_sq / self.log_weighted if self.log_weighted else math.nan

    @property
    def identity_error(self) -> float:
        if self.double_sum == 0:
            return abs(self.hs_norm_sq)
        return abs(self.hs_norm_sq - self.double_sum) / self.double_sum


def hs_report(u: SpectralField, kappa: complex = DEFAULT_KAPPA) -> HSReport:
    return HSReport(hs_norm_sq(build_kernel(u, kappa)), hs_double_sum(u, kappa), log_weighted_sum(u, kappa))


def periodization_factor(lam: int, kappa: complex) -> float:
    """coth(pi lam kappa), real when 2 lam Im(kappa) is an integer."""
    kappa = _check_kappa(kappa)
    shift = 2.0 * lam * kappa.imag
    j = round(shift)
    if abs(shift - j) > 1e-9:
        raise KernelError(f"2 Im(kappa) = {2 * kappa.imag} is not on Z_{lam}")
    x = math.pi * lam * kappa.real
    return 1.0 / math.tanh(x) if j % 2 == 0 else math.tanh(x)


def _closed_form(u: SpectralField, kappa: complex, shift: int = 0) -> float:
    factor = periodization_factor(u.lam, kappa)
    m = u.lattice.modes() - shift
    kr, ki = kappa.real, kappa.imag
    w = 2.0 * kr / (4.0 * kr ** 2 + (m - 2.0 * ki) ** 2)
    return factor * math.fsum(w * np.abs(u.coeffs) ** 2) / u.lam


def _resolvent_tail(u: SpectralField, kappa: complex, shift: int = 0) -> complex:
    """Trace contribution of lattice modes beyond the cutoff, summed exactly."""
    lat = u.lattice
    lam, k = lat.lam, lat.half_width
    total = 0j
    for pos in np.nonzero(u.coeffs)[0]:
        d = int(pos) - k
        a = lam * kappa - 1j * (d - lam * shift)
        b = lam * kappa
        upper_start = min(k, k - d) + 1
        lower_start = -max(-k, -k - d) + 1
        upper = 1j * (special.psi(upper_start - 1j * b) - special.psi(upper_start + 1j * a))
        lower = -1j * (special.psi(lower_start + 1j * b) - special.psi(lower_start - 1j * a))
        total += abs(u.coeffs[pos]) ** 2 * lam ** 2 / (a + b) * (upper + lower)
    return total / (2.0 * math.pi * lam ** 2)


def _matrix_leading(op: KernelOperator, u: SpectralField, tail_correct: bool) -> float:
    trace = complex(np.sum(op.matrix * op.partner.T))
    if tail_correct:
        trace += _resolvent_tail(u, op.kappa, op.shift)
    return trace.real


def leading_term(
    u: SpectralField,
    kappa: complex = DEFAULT_KAPPA,
    mode: str = "closed_form",
    tail_correct: bool = True,
    shift: int = 0,
) -> float:
    """Re tr(AB), of M_shift u when shift is nonzero.

    closed_form: factor * lam^{-1} sum_m |u^(m)|^2 2 k_r / (4 k_r^2 + (m - n - 2 k_i)^2),
    which needs 2 Im(kappa) on the lattice. matrix: the trace of the assembled
    product, completed by the exact resolvent sum over modes past the cutoff
    unless tail_correct is False.
    """
    kappa = _check_kappa(kappa)
    shift = _check_shift(shift)
    if mode == "closed_form":
        return _closed_form(u, kappa, shift)
    if mode == "matrix":
        return _matrix_leading(build_kernel(u, kappa, shift), u, tail_correct)
    raise KernelError(f"unknown leading_term mode: {mode}")


@dataclass
class AlphaResult:
    """hs_norm_sq is ||A||_HS^2; ratio = ||A||_HS ||B||_HS drives the tail and the smallness test.

    With S = T^H the partner satisfies |B^T| = |A| entrywise, so the two coincide;
    ratio is still formed from both factors.
    """

    value: float
    terms: List[float]
    J: int
    hs_norm_sq: float
    ratio: float
    tail_bound: float
    smallness_ok: bool
    c0: float
    kappa: complex = DEFAULT_KAPPA
    usable: bool = True

    @property
    def margin(self) -> float:
        return self.c0 - self.ratio

    def as_row(self, time: float) -> List[Any]:
        return [
            time,
            self.kappa.real,
            self.kappa.imag,
            self.J,
            self.value,
            *self.terms,
            self.hs_norm_sq,
            self.ratio,
            self.tail_bound,
            int(self.smallness_ok),
        ]


def alpha_csv_header(J: int) -> List[str]:
    return ["time", "kappa_re", "kappa_im", "J", "value", *[f"term_{j}" for j in range(1, J + 1)],
            "hs_norm_sq", "ratio", "tail_bound", "smallness_ok"]


def series_tail(r: float, J: int) -> float:
    """sum_{j > J} r^j / j, inf for r >= 1."""
    if r >= 1.0:
        return math.inf
    if r == 0.0:
        return 0.0
    if r > 0.5:
        return max(0.0, -math.log1p(-r) - math.fsum(r ** j / j for j in range(1, J + 1)))
    terms = []
    j = J + 1
    term = r ** j / j
    while term > 0.0 and (not terms or term > 1e-18 * terms[0]):
        terms.append(term)
        j += 1
        term = r ** j / j
    return math.fsum(terms)


def _trace_powers(m: np.ndarray, J: int, method: str, backend: str) -> List[complex]:
    if backend == "torch":
        import torch  # local import to avoid hard dependency at import time

        mt = torch.from_numpy(np.ascontiguousarray(m))
        if method == "eig":
            w = torch.linalg.eigvals(mt).numpy()
            return [complex(np.sum(w ** j)) for j in range(1, J + 1)]
        out, p = [], mt
        for j in range(1, J + 1):
            out.append(complex(torch.trace(p).item()))
            if j < J:
                p = p @ mt
        return out
    if backend != "numpy":
        raise KernelError(f"unknown backend: {backend}")
    if method == "eig":
        w = np.linalg.eigvals(m)
        return [complex(np.sum(w ** j)) for j in range(1, J + 1)]
    if method != "direct":
        raise KernelError(f"unknown trace method: {method}")
    # powers up to ceil(J/2); tr(M^j) = sum(M^h * (M^(j-h)).T) above that
    h = (J + 1) // 2
    powers = [m]
    while len(powers) < h:
        powers.append(powers[-1] @ m)
    out = [complex(np.trace(p)) for p in powers]
    for j in range(h + 1, J + 1):
        out.append(complex(np.sum(powers[h - 1] * powers[j - h - 1].T)))
    return out


def alpha(
    u: SpectralField,
    kappa: complex = DEFAULT_KAPPA,
    J: int = DEFAULT_J,
    sign: Sign | str = Sign.DEFOCUSING,
    c0: float = DEFAULT_C0,
    method: str = "direct",
    backend: str = "numpy",
    tail_correct: bool = True,
    shift: int = 0,
    max_modes: int | None = MAX_KERNEL_MODES,
) -> AlphaResult:
    """Truncated trace series of the perturbation determinant, of M_shift u when shift is nonzero."""
    kappa = _check_kappa(kappa)
    if int(J) != J or J < 1:
        raise KernelError(f"J must be a positive integer, got {J}")
    J = int(J)
    op = build_kernel(u, kappa, shift, max_modes)
    hs_a = hs_norm_sq(op)
    hs_b = math.fsum(np.abs(op.partner.ravel()) ** 2)
    r = math.sqrt(hs_a * hs_b)
    s = Sign(sign).value_sign
    traces = _trace_powers(op.product(), J, method, backend)
    terms = [((-s) ** (j - 1) / j * traces[j - 1]).real for j in range(1, J + 1)]
    if tail_correct:
        terms[0] = _matrix_leading(op, u, True)
    tail = series_tail(r, J)
    usable = r < 1.0
    if not usable:
        log.warning(f"series ratio r={r:.4g} >= 1 at kappa={kappa}, alpha unusable")
    return AlphaResult(
        value=math.fsum(terms),
        terms=terms,
        J=J,
        hs_norm_sq=hs_a,
        ratio=r,
        tail_bound=tail,
        smallness_ok=usable and r <= c0,
        c0=c0,
        kappa=kappa,
        usable=usable,
    )


def require_usable(res: AlphaResult) -> AlphaResult:
    if not res.usable:
        raise SeriesDivergenceError(f"trace series diverges: r={res.ratio:.4g}")
    return res


@dataclass(frozen=True)
class TermDiscrepancy:
    n: int
    complex_terms: List[float]
    modulated_terms: List[float]

    @property
    def abs_diff(self) -> List[float]:
        return [abs(a - b) for a, b in zip(self.complex_terms, self.modulated_terms)]


def alpha_terms_discrepancy(
    u: SpectralField,
    n: int,
    J: int = DEFAULT_J,
    kappa_re: float = DEFAULT_KAPPA,
    sign: Sign | str = Sign.DEFOCUSING,
) -> TermDiscrepancy:
    """Per-order alpha(kappa_re + i n/2; u) against alpha(kappa_re; M_n u).

    M_n u is taken on a lattice enlarged by |n| so no mass is dropped.
    """
    from src.symmetry import modulate  # local import to avoid a module cycle

    wide = make_lattice(u.lam, u.lattice.cutoff + abs(int(n)))
    shifted = modulate(embed(u, wide), n)
    a = alpha(u, complex(kappa_re, n / 2.0), J, sign)
    b = alpha(shifted, kappa_re, J, sign)
    return TermDiscrepancy(int(n), a.terms, b.terms)


@dataclass
class DriftReport:
    times: List[float]
    values: List[float]
    margins: List[float]
    verifiable: List[bool]
    results: List[AlphaResult] = dc_field(repr=False, default_factory=list)

    @property
    def unverifiable(self) -> int:
        return sum(1 for v in self.verifiable if not v)

    @property
    def max_abs_drift(self) -> float:
        vals = [v for v, ok in zip(self.values, self.verifiable) if ok]
        if len(vals) < 2:
            return 0.0
        return max(abs(v - vals[0]) for v in vals)

    @property
    def max_rel_drift(self) -> float:
        vals = [v for v, ok in zip(self.values, self.verifiable) if ok]
        if len(vals) < 2 or vals[0] == 0:
            return 0.0
        return self.max_abs_drift / abs(vals[0])

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else math.inf


def conservation_drift(
    traj: "Trajectory",
    kappa: complex = DEFAULT_KAPPA,
    J: int = DEFAULT_J,
    c0: float = DEFAULT_C0,
    max_workers: int = 1,
) -> DriftReport:
    """Alpha along a trajectory; snapshots failing smallness are kept but marked unverifiable."""
    sign = traj.spec.equation.sign

    def evaluate(u: SpectralField) -> AlphaResult:
        return alpha(u, kappa, J, sign, c0)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(evaluate, traj.fields))
    verifiable = [r.smallness_ok for r in results]
    report = DriftReport(
        times=traj.times,
        values=[r.value for r in results],
        margins=[r.margin for r in results],
        verifiable=verifiable,
        results=results,
    )
    if report.unverifiable:
        log.warning(f"{report.unverifiable} snapshot(s) fail smallness (c0={c0}), marked unverifiable")
    log.info(f"alpha drift rel={report.max_rel_drift:.3e} over {len(results)} snapshots")
    return report


__all__ = [
    "DEFAULT_KAPPA",
    "DEFAULT_J",
    "DEFAULT_C0",
    "KernelError",
    "KernelSizeError",
    "MAX_KERNEL_MODES",
    "SeriesDivergenceError",
    "KernelOperator",
    "HSReport",
    "AlphaResult",
    "TermDiscrepancy",
    "DriftReport",
    "build_kernel",
    "hs_norm_sq",
    "hs_double_sum",
    "log_weighted_sum",
    "hs_report",
    "periodization_factor",
    "leading_term",
    "alpha",
    "require_usable",
    "series_tail",
    "alpha_csv_header",
    "alpha_terms_discrepancy",
    "conservation_drift",
]
