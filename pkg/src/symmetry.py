"""
Exact transforms of fields on dilated tori.

Provides:
- TransformParams, TransformError
- rescale(f, lam, target_cutoff=None) / unscale(f, lam)
- modulate(f, n, target=None)
- galilean_nls(f, beta, t, target=None) / galilean_mkdv(f, beta, t, target=None)
- gauge(f, mu, t, sign)
- mean_intensity(f), shift_loss(f, n)
- gauge_trajectory(traj), galilean_trajectory(traj, beta, family)

Shifts that push modes beyond the cutoff drop them; the dropped L^2 mass is
logged at WARNING and available through shift_loss.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from src.lattice import FrequencyLattice, SpectralField, mass
from src.models.models import Sign
from src.utilis import get_logger

if TYPE_CHECKING:
    from src.flow import Trajectory

log = get_logger("symmetry")


class TransformError(ValueError):
    """Transform parameters incompatible with the field's lattice."""


def _require_int(name: str, v: float) -> int:
    if isinstance(v, bool) or int(v) != v:
        raise TransformError(f"{name} must be an integer on the torus, got {v}")
    return int(v)


@dataclass(frozen=True)
class TransformParams:
    beta: int = 0
    lambda_scale: int = 1
    time: float = 0.0
    mu: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", _require_int("beta", self.beta))
        scale = _require_int("lambda_scale", self.lambda_scale)
        if scale < 1:
            raise TransformError(f"lambda_scale must be >= 1, got {scale}")
        object.__setattr__(self, "lambda_scale", scale)


def mean_intensity(f: SpectralField) -> float:
    """Average of |u|^2 over T_lam."""
    return mass(f) / (2.0 * math.pi * f.lam)


def _shifted(coeffs: np.ndarray, src: FrequencyLattice, dst: FrequencyLattice, shift: int) -> np.ndarray:
    """out[k] = coeffs[k + shift] in integer index units, zero where undefined."""
    out = np.zeros(dst.mode_count, dtype=np.complex128)
    ks, kd = src.half_width, dst.half_width
    lo = max(-kd, -ks - shift)
    hi = min(kd, ks - shift)
    if lo <= hi:
        out[lo + kd:hi + kd + 1] = coeffs[lo + shift + ks:hi + shift + ks + 1]
    return out


def shift_loss(f: SpectralField, n: int, target: FrequencyLattice | None = None) -> float:
    """L^2 mass of f that modulate(f, n, target) discards."""
    dst = target or f.lattice
    kept = _shifted(f.coeffs, f.lattice, dst, _require_int("n", n) * f.lam)
    return max(0.0, mass(f) - math.fsum(np.abs(kept) ** 2) / f.lam)


def _target(f: SpectralField, target: FrequencyLattice | None) -> FrequencyLattice:
    if target is None:
        return f.lattice
    if target.lam != f.lam:
        raise TransformError(f"target lattice lambda {target.lam} != field lambda {f.lam}")
    return target


def modulate(f: SpectralField, n: int, target: FrequencyLattice | None = None) -> SpectralField:
    """M_n f = e^{-inx} f, i.e. u^_new(xi) = u^(xi + n)."""
    n = _require_int("n", n)
    dst = _target(f, target)
    out = SpectralField(dst, _shifted(f.coeffs, f.lattice, dst, n * f.lam))
    dropped = mass(f) - mass(out)
    if dropped > 1e-14 * max(1.0, mass(f)):
        log.warning(f"modulation by {n} dropped L2 mass {dropped:.3e}")
    return out


def galilean_nls(f: SpectralField, beta: int, t: float, target: FrequencyLattice | None = None) -> SpectralField:
    """Boost e^{-i beta x} e^{i beta^2 t} u(x - 2 beta t) in spectral form."""
    g = modulate(f, beta, target)
    if t == 0 or beta == 0:
        return g
    xi = g.lattice.modes()
    return g.with_coeffs(g.coeffs * np.exp(-1j * beta ** 2 * t - 2j * beta * xi * t))


def galilean_mkdv(f: SpectralField, beta: int, t: float, target: FrequencyLattice | None = None) -> SpectralField:
    """Boost e^{-i beta x} e^{2 i beta^3 t} u(x - 3 beta^2 t) in spectral form."""
    g = modulate(f, beta, target)
    if t == 0 or beta == 0:
        return g
    xi = g.lattice.modes()
    return g.with_coeffs(g.coeffs * np.exp(-1j * beta ** 3 * t - 3j * beta ** 2 * xi * t))


def gauge(f: SpectralField, mu: float, t: float, sign: Sign | str = Sign.DEFOCUSING) -> SpectralField:
    """Multiply by e^{-4 i s t mu}, s = +1 for the upper (defocusing) sign."""
    if t == 0 or mu == 0:
        return f
    return f.scaled(np.exp(-4j * Sign(sign).value_sign * t * mu))


def rescale(f: SpectralField, lam: int, target_cutoff: int | None = None) -> SpectralField:
    """f_lam(x) = lam^{-1} f(x / lam): coefficient at index k moves from k/mu to k/(mu lam)."""
    lam = _require_int("lambda", lam)
    if lam < 1:
        raise TransformError(f"lambda must be >= 1, got {lam}")
    src = f.lattice
    needed = max(1, math.ceil(src.cutoff / lam))
    cutoff = needed if target_cutoff is None else int(target_cutoff)
    dst = FrequencyLattice(src.lam * lam, cutoff)
    if dst.half_width < src.half_width:
        nz = np.nonzero(f.coeffs)[0]
        if nz.size and np.abs(src.indices()[nz]).max() > dst.half_width:
            raise TransformError(f"target cutoff {cutoff} too small, need {needed}")
    return SpectralField(dst, _shifted(f.coeffs, src, dst, 0))


def unscale(f: SpectralField, lam: int) -> SpectralField:
    """Inverse of rescale: back from T_{mu lam} to T_mu with the same coefficients."""
    lam = _require_int("lambda", lam)
    if lam < 1 or f.lam % lam:
        raise TransformError(f"field lambda {f.lam} is not a multiple of {lam}")
    dst = FrequencyLattice(f.lam // lam, f.lattice.cutoff * lam)
    return SpectralField(dst, _shifted(f.coeffs, f.lattice, dst, 0))


def gauge_trajectory(traj: "Trajectory") -> "Trajectory":
    """Gauge every snapshot with its own mean intensity and time."""
    sign = traj.spec.equation.sign
    snaps = [(t, gauge(u, mean_intensity(u), t, sign)) for t, u in traj.snapshots]
    return traj.with_snapshots(snaps)


def galilean_trajectory(traj: "Trajectory", beta: int, family: str = "nls", target: FrequencyLattice | None = None) -> "Trajectory":
    if family not in ("nls", "mkdv"):
        raise TransformError(f"unknown Galilean family: {family}")
    boost = galilean_nls if family == "nls" else galilean_mkdv
    return traj.with_snapshots([(t, boost(u, beta, t, target)) for t, u in traj.snapshots])


__all__ = [
    "TransformError",
    "TransformParams",
    "mean_intensity",
    "shift_loss",
    "modulate",
    "galilean_nls",
    "galilean_mkdv",
    "gauge",
    "rescale",
    "unscale",
    "gauge_trajectory",
    "galilean_trajectory",
]
