"""
Norm calculators on dilated tori.

Provides:
- NormKind, NormSpec, NormReport, SpaceConfigError
- sobolev_norm(f, theta)
- fourier_lebesgue_norm(f, s, p)
- block_masses(f) -> (n, b_n) for the sharp windows I_n = [n - 1/2, n + 1/2)
- modulation_norm(f, s, p, window_radius=None)
- modulated_sobolev_norm / modulated_sobolev_report(f, theta, p, s=0, ...)
- norm_value(f, spec) / norm_report(f, spec, field_id)
- equivalence_window(theta, s), equivalence_report(corpus, theta, p, s)
- scaling_check(f, lam, p, s=0)

All weighted sums go through math.fsum so corpus ratios are reproducible.
"""

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate

from src.lattice import SpectralField
from src.utilis import get_logger

log = get_logger("spaces")

DEFAULT_MARGIN = 512


class SpaceConfigError(ValueError):
    """Norm parameters outside the range where the norm is defined or finite."""


class NormKind(str, enum.Enum):
    SOBOLEV = "sobolev"
    FOURIER_LEBESGUE = "fourier_lebesgue"
    MODULATION = "modulation"
    MODULATED_SOBOLEV = "modulated_sobolev"


def _check_p(p: float) -> None:
    if not (2.0 <= p < math.inf):
        raise SpaceConfigError(f"p must lie in [2, inf), got {p}")


def _check_s(s: float) -> None:
    if s < 0:
        raise SpaceConfigError(f"weight exponent s must be >= 0, got {s}")


@dataclass(frozen=True)
class NormSpec:
    kind: NormKind
    theta: float = 0.0
    s: float = 0.0
    p: float = 2.0
    window_radius: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NormKind(self.kind))
        if self.kind is not NormKind.SOBOLEV:
            _check_p(self.p)
            _check_s(self.s)
        if self.kind is NormKind.MODULATED_SOBOLEV and self.theta >= 0:
            raise SpaceConfigError(f"modulated Sobolev norm needs theta < 0, got {self.theta}")


@dataclass(frozen=True)
class NormReport:
    kind: NormKind
    theta: float
    s: float
    p: float
    value: float
    tail_estimate: float = 0.0
    field_id: str = ""

    def as_row(self) -> List[Any]:
        return [self.field_id, self.kind.value, self.theta, self.s, self.p, self.value, self.tail_estimate]


NORM_CSV_HEADER = ["field_id", "kind", "theta", "s", "p", "value", "tail_estimate"]


def _bracket(x: np.ndarray | float) -> np.ndarray:
    return np.sqrt(1.0 + np.square(x))


def sobolev_norm(f: SpectralField, theta: float) -> float:
    terms = _bracket(f.lattice.modes()) ** (2.0 * theta) * np.abs(f.coeffs) ** 2
    return math.sqrt(math.fsum(terms) / f.lam)


def fourier_lebesgue_norm(f: SpectralField, s: float, p: float) -> float:
    _check_p(p)
    _check_s(s)
    a = np.abs(f.coeffs)
    if not a.any():
        return 0.0
    # factor out the max so large p does not underflow
    top = float(a.max())
    terms = _bracket(f.lattice.modes()) ** (s * p) * (a / top) ** p
    return top * (math.fsum(terms) / f.lam) ** (1.0 / p)


def block_masses(f: SpectralField) -> Tuple[np.ndarray, np.ndarray]:
    """Window indices n and b_n = (lam^{-1} sum_{xi in I_n} |u^(xi)|^2)^{1/2}."""
    lam = f.lam
    n_of_k = (2 * f.lattice.indices() + lam) // (2 * lam)
    lo = int(n_of_k.min())
    sq = np.bincount(n_of_k - lo, weights=np.abs(f.coeffs) ** 2)
    ns = np.arange(lo, lo + sq.shape[0])
    return ns, np.sqrt(sq / lam)


def modulation_norm(f: SpectralField, s: float, p: float, window_radius: int | None = None) -> float:
    _check_p(p)
    _check_s(s)
    ns, b = block_masses(f)
    occupied = ns[b > 0]
    if window_radius is not None and occupied.size and np.abs(occupied).max() > window_radius:
        raise SpaceConfigError(
            f"window_radius {window_radius} < occupied block index {int(np.abs(occupied).max())}"
        )
    if not occupied.size:
        return 0.0
    top = float(b.max())
    terms = _bracket(ns) ** (s * p) * (b / top) ** p
    return top * math.fsum(terms) ** (1.0 / p)


def _local_h_theta_sq(modes: np.ndarray, weights: np.ndarray, theta: float, lam: int, n: np.ndarray) -> np.ndarray:
    """h(n) = lam^{-1} sum_xi <xi - n>^{2 theta} |u^(xi)|^2 for each n."""
    return (_bracket(modes[None, :] - n[:, None]) ** (2.0 * theta)) @ weights / lam


def modulated_sobolev_report(
    f: SpectralField,
    theta: float,
    p: float,
    s: float = 0.0,
    window_radius: int | None = None,
    margin: int = DEFAULT_MARGIN,
) -> NormReport:
    """MH^{theta,p}_s norm: explicit n-sum on [-R, R] plus an integral tail.

    R = window_radius if given, else ceil(max |xi| of the support) + margin.
    The tail over |n| > R is the midpoint-rule integral of the summand and is
    reported as ``tail_estimate`` (its contribution to the norm).
    """
    _check_p(p)
    _check_s(s)
    if theta >= 0:
        raise SpaceConfigError(f"modulated Sobolev norm needs theta < 0, got {theta}")
    kind = NormKind.MODULATED_SOBOLEV
    if f.is_zero():
        return NormReport(kind, theta, s, p, 0.0, 0.0)
    if (theta + s) * p >= -1:
        raise SpaceConfigError(f"n-sum diverges for (theta + s) p = {(theta + s) * p} >= -1")

    nz = np.nonzero(f.coeffs)[0]
    modes = f.lattice.modes()[nz]
    weights = np.abs(f.coeffs[nz]) ** 2
    support = float(np.abs(modes).max())
    if window_radius is None:
        radius = int(math.ceil(support)) + margin
    else:
        radius = int(window_radius)
        if radius < support:
            raise SpaceConfigError(f"window_radius {radius} below field support {support}")

    scale = math.fsum(weights) / f.lam
    n = np.arange(-radius, radius + 1, dtype=np.float64)
    h = _local_h_theta_sq(modes, weights, theta, f.lam, n) / scale
    head = math.fsum(_bracket(n) ** (s * p) * h ** (p / 2.0))

    def summand(x: float) -> float:
        hx = _local_h_theta_sq(modes, weights, theta, f.lam, np.array([x]))[0] / scale
        return float(_bracket(x) ** (s * p) * hx ** (p / 2.0))

    edge = radius + 0.5
    right, _ = integrate.quad(summand, edge, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    left, _ = integrate.quad(summand, -np.inf, -edge, epsabs=0.0, epsrel=1e-12, limit=200)

    unit = math.sqrt(scale)
    value = unit * (head + right + left) ** (1.0 / p)
    tail = value - unit * head ** (1.0 / p)
    log.debug(f"MH theta={theta} p={p} s={s} R={radius} tail={tail:.3e}")
    return NormReport(kind, theta, s, p, value, tail)


def modulated_sobolev_norm(
    f: SpectralField,
    theta: float,
    p: float,
    s: float = 0.0,
    window_radius: int | None = None,
    margin: int = DEFAULT_MARGIN,
) -> float:
    return modulated_sobolev_report(f, theta, p, s, window_radius, margin).value


def norm_report(f: SpectralField, spec: NormSpec, field_id: str = "") -> NormReport:
    if spec.kind is NormKind.SOBOLEV:
        rep = NormReport(spec.kind, spec.theta, spec.s, spec.p, sobolev_norm(f, spec.theta))
    elif spec.kind is NormKind.FOURIER_LEBESGUE:
        rep = NormReport(spec.kind, spec.theta, spec.s, spec.p, fourier_lebesgue_norm(f, spec.s, spec.p))
    elif spec.kind is NormKind.MODULATION:
        value = modulation_norm(f, spec.s, spec.p, spec.window_radius)
        rep = NormReport(spec.kind, spec.theta, spec.s, spec.p, value)
    else:
        rep = modulated_sobolev_report(f, spec.theta, spec.p, spec.s, spec.window_radius)
    return NormReport(rep.kind, rep.theta, rep.s, rep.p, rep.value, rep.tail_estimate, field_id)


def norm_value(f: SpectralField, spec: NormSpec) -> float:
    return norm_report(f, spec).value


def equivalence_window(theta: float, s: float, terms: int = 20000) -> Tuple[float, float]:
    """Field- and lambda-independent bounds for MH^{theta,p}_s / M^{2,p}_s.

    Lower: <1/2>^theta, since <xi - n> <= <1/2> on I_n.
    Upper: (2^s sum_j <j>^{2s} rho(j))^{1/2} with rho(0) = 1 and
    rho(j) = <|j| - 1/2>^{2 theta}; finite iff theta + s < -1/2.
    """
    if theta + s >= -0.5:
        raise SpaceConfigError(f"equivalence needs theta + s < -1/2, got {theta + s}")
    lower = (1.25) ** (theta / 2.0)

    def kernel(j: np.ndarray | float) -> np.ndarray | float:
        return _bracket(j) ** (2.0 * s) * _bracket(np.abs(j) - 0.5) ** (2.0 * theta)

    j = np.arange(1, terms + 1, dtype=np.float64)
    tail, _ = integrate.quad(kernel, terms + 0.5, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    total = 1.0 + 2.0 * (math.fsum(kernel(j)) + tail)
    return lower, math.sqrt(2.0 ** s * total)


@dataclass
class EquivalenceReport:
    theta: float
    p: float
    s: float
    ratios: List[float]
    skipped: int
    window: Tuple[float, float]
    ratio_min: float = math.nan
    ratio_max: float = math.nan
    ratio_mean: float = math.nan
    within_window: bool = True
    per_lambda: Dict[int, Tuple[float, float]] = dc_field(default_factory=dict)

    @property
    def spread(self) -> float:
        return self.ratio_max / self.ratio_min if self.ratios else math.nan


def equivalence_report(
    corpus: Sequence[SpectralField],
    theta: float,
    p: float,
    s: float = 0.0,
    max_workers: int = 1,
) -> EquivalenceReport:
    """Ratio statistics of ||f||_{MH^{theta,p}_s} / ||f||_{M^{2,p}_s} over a corpus."""
    _check_p(p)
    _check_s(s)
    window = equivalence_window(theta, s)
    fields = [f for f in corpus if not f.is_zero()]
    skipped = len(corpus) - len(fields)
    if skipped:
        log.info(f"skipped {skipped} zero field(s) in equivalence corpus")

    def ratio(f: SpectralField) -> float:
        return modulated_sobolev_norm(f, theta, p, s) / modulation_norm(f, s, p)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        ratios = list(pool.map(ratio, fields))

    rep = EquivalenceReport(theta, p, s, ratios, skipped, window)
    if not ratios:
        return rep
    rep.ratio_min = min(ratios)
    rep.ratio_max = max(ratios)
    rep.ratio_mean = math.fsum(ratios) / len(ratios)
    lo, hi = window
    rtol = 1e-10
    rep.within_window = all(lo * (1 - rtol) <= r <= hi * (1 + rtol) for r in ratios)
    by_lam: Dict[int, List[float]] = {}
    for f, r in zip(fields, ratios):
        by_lam.setdefault(f.lam, []).append(r)
    rep.per_lambda = {lam: (min(v), max(v)) for lam, v in sorted(by_lam.items())}
    if not rep.within_window:
        log.warning(f"equivalence ratios [{rep.ratio_min:.4g}, {rep.ratio_max:.4g}] leave window [{lo:.4g}, {hi:.4g}]")
    return rep


@dataclass(frozen=True)
class ScalingReport:
    lam: int
    p: float
    s: float
    fl_unit: float
    fl_scaled: float
    mod_scaled: float
    c_upper: float
    c_lower: float
    fl_identity_error: float


def scaling_check(f: SpectralField, lam: int, p: float, s: float = 0.0) -> ScalingReport:
    """Measured constants of the two scaling relations between FL^p(T) and M^{2,p}(T_lam).

    c_upper = ||f||_{FL^p(T)} / (lam^{1/2} ||f_lam||_{M^{2,p}(T_lam)})
    c_lower = ||f_lam||_{M^{2,p}(T_lam)} / (lam^{-1/p} ||f||_{FL^p(T)})
    fl_identity_error is the relative defect of ||f_lam||_{FL^p} = lam^{-1/p} ||f||_{FL^p}.
    """
    from src.symmetry import rescale  # local import to avoid a module cycle

    if isinstance(lam, bool) or int(lam) != lam or lam < 1:
        raise SpaceConfigError(f"scaling factor must be an integer >= 1, got {lam}")
    if f.lam != 1:
        raise SpaceConfigError("scaling_check expects a field on the unit torus")
    lam = int(lam)
    f_lam = rescale(f, lam)
    fl_unit = fourier_lebesgue_norm(f, s, p)
    fl0_unit = fourier_lebesgue_norm(f, 0.0, p)
    fl0_scaled = fourier_lebesgue_norm(f_lam, 0.0, p)
    fl_scaled = fourier_lebesgue_norm(f_lam, s, p)
    mod_scaled = modulation_norm(f_lam, s, p)
    if fl_unit == 0.0:
        return ScalingReport(lam, p, s, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0)
    expected = lam ** (-1.0 / p) * fl0_unit
    return ScalingReport(
        lam=lam,
        p=p,
        s=s,
        fl_unit=fl_unit,
        fl_scaled=fl_scaled,
        mod_scaled=mod_scaled,
        c_upper=fl_unit / (math.sqrt(lam) * mod_scaled),
        c_lower=mod_scaled / (lam ** (-1.0 / p) * fl_unit),
        fl_identity_error=abs(fl0_scaled - expected) / expected,
    )


__all__ = [
    "DEFAULT_MARGIN",
    "NORM_CSV_HEADER",
    "SpaceConfigError",
    "NormKind",
    "NormSpec",
    "NormReport",
    "EquivalenceReport",
    "ScalingReport",
    "sobolev_norm",
    "fourier_lebesgue_norm",
    "block_masses",
    "modulation_norm",
    "modulated_sobolev_report",
    "modulated_sobolev_norm",
    "norm_report",
    "norm_value",
    "equivalence_window",
    "equivalence_report",
    "scaling_check",
]
