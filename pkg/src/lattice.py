"""
Frequency lattices on dilated tori T_lam = R / (2 pi lam Z) and the spectral
transforms between coefficients and physical samples.

Conventions: a field u on T_lam is stored through its coefficients u^(xi) on
the dual lattice Z_lam = lam^{-1} Z, truncated to |xi| <= cutoff, with

    u(x)  = (2 pi)^{-1/2} lam^{-1} sum_xi u^(xi) e^{i x xi}
    |u|^2 = lam^{-1} sum_xi |u^(xi)|^2           (Plancherel)

Provides:
- FrequencyLattice, SpectralField, LatticeError
- make_lattice(lam, cutoff)
- synthesize(f, sample_count=None) / analyze(samples, lattice)
- convolve(f, g)
- random_gaussian_data(lattice, alpha, seed), random_band_limited(...)
- single_mode(lattice, xi, amplitude), zero_field(lattice), embed(f, lattice)
- field_to_json / field_from_json, dump_binary / load_binary
- write_field / read_field (by extension: .json or .bin)
"""

import json
import math
import os
import struct
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict

import numpy as np

from src.utilis import get_logger

log = get_logger("lattice")

SQRT_2PI = math.sqrt(2.0 * math.pi)
_HEADER = struct.Struct("<II")


class LatticeError(ValueError):
    """Invalid lattice parameters or a field that does not fit its lattice."""


@dataclass(frozen=True)
class FrequencyLattice:
    lam: int
    cutoff: int

    def __post_init__(self) -> None:
        if int(self.lam) != self.lam or self.lam < 1:
            raise LatticeError(f"lambda must be a positive integer, got {self.lam}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise LatticeError(f"cutoff must be a positive integer, got {self.cutoff}")

    @property
    def half_width(self) -> int:
        """Largest integer index k, modes are k / lam for |k| <= half_width."""
        return self.cutoff * self.lam

    @property
    def mode_count(self) -> int:
        return 2 * self.half_width + 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.lam

    def indices(self) -> np.ndarray:
        k = self.half_width
        return np.arange(-k, k + 1)

    def modes(self) -> np.ndarray:
        return self.indices() / self.lam

    def position(self, xi: float) -> int:
        """Array position of the lattice mode xi."""
        k = xi * self.lam
        if abs(k - round(k)) > 1e-9:
            raise LatticeError(f"xi={xi} is not on Z_{self.lam}")
        k = int(round(k))
        if abs(k) > self.half_width:
            raise LatticeError(f"xi={xi} outside cutoff {self.cutoff}")
        return k + self.half_width

    def default_grid(self) -> int:
        """Next power of two >= 2 * mode_count."""
        return 1 << (2 * self.mode_count - 1).bit_length()

    def grid_weight(self, sample_count: int) -> float:
        return 2.0 * math.pi * self.lam / sample_count


@dataclass(frozen=True)
class SpectralField:
    lattice: FrequencyLattice
    coeffs: np.ndarray = dc_field(repr=False)

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=np.complex128).reshape(-1)
        if c.shape[0] != self.lattice.mode_count:
            raise LatticeError(
                f"coeff length {c.shape[0]} != mode_count {self.lattice.mode_count}"
            )
        if not np.all(np.isfinite(c)):
            raise LatticeError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def lam(self) -> int:
        return self.lattice.lam

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.lattice, coeffs)

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * factor)

    def l2_norm(self) -> float:
        return math.sqrt(mass(self))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def support_radius(self) -> float:
        """max |xi| over nonzero coefficients, 0 for the zero field."""
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return 0.0
        return float(np.max(np.abs(self.lattice.modes()[nz])))

    def coefficient(self, xi: float) -> complex:
        return complex(self.coeffs[self.lattice.position(xi)])


def make_lattice(lam: int, cutoff: int) -> FrequencyLattice:
    if not (_is_int(lam) and _is_int(cutoff)):
        raise LatticeError(f"lambda and cutoff must be integers, got ({lam}, {cutoff})")
    return FrequencyLattice(int(lam), int(cutoff))


def _is_int(v: Any) -> bool:
    try:
        return int(v) == v
    except (TypeError, ValueError):
        return False


def zero_field(lattice: FrequencyLattice) -> SpectralField:
    return SpectralField(lattice, np.zeros(lattice.mode_count, dtype=np.complex128))


def single_mode(lattice: FrequencyLattice, xi: float, amplitude: complex = SQRT_2PI) -> SpectralField:
    c = np.zeros(lattice.mode_count, dtype=np.complex128)
    c[lattice.position(xi)] = amplitude
    return SpectralField(lattice, c)


def mass(f: SpectralField) -> float:
    """Squared L^2(T_lam) norm via Plancherel."""
    return math.fsum(np.abs(f.coeffs) ** 2) / f.lam


def _placement(lattice: FrequencyLattice, sample_count: int) -> np.ndarray:
    return np.mod(lattice.indices(), sample_count)


def samples_from_coeffs(coeffs: np.ndarray, lattice: FrequencyLattice, sample_count: int) -> np.ndarray:
    """Array-level synthesis, no validation of finiteness."""
    m = int(sample_count)
    if m < lattice.mode_count:
        raise LatticeError(f"undersampled grid: {m} < mode_count {lattice.mode_count}")
    placed = np.zeros(m, dtype=np.complex128)
    placed[_placement(lattice, m)] = coeffs
    return np.fft.ifft(placed) * (m / (SQRT_2PI * lattice.lam))


def coeffs_from_samples(samples: np.ndarray, lattice: FrequencyLattice) -> np.ndarray:
    m = samples.shape[0]
    if m < lattice.mode_count:
        raise LatticeError(f"sample count {m} < mode_count {lattice.mode_count}")
    return np.fft.fft(samples)[_placement(lattice, m)] * (SQRT_2PI * lattice.lam / m)


def synthesize(f: SpectralField, sample_count: int | None = None) -> np.ndarray:
    """Physical samples f(x_j), x_j = 2 pi lam j / M, j = 0..M-1."""
    m = f.lattice.default_grid() if sample_count is None else sample_count
    return samples_from_coeffs(f.coeffs, f.lattice, m)


def analyze(samples: np.ndarray, lattice: FrequencyLattice) -> SpectralField:
    """Coefficients on ``lattice`` of equispaced samples over [0, 2 pi lam)."""
    v = np.asarray(samples, dtype=np.complex128).reshape(-1)
    return SpectralField(lattice, coeffs_from_samples(v, lattice))


def convolve(f: SpectralField, g: SpectralField) -> SpectralField:
    """Coefficients of the product f g, truncated to the common lattice."""
    if f.lattice != g.lattice:
        raise LatticeError(f"lattice mismatch: {f.lattice} vs {g.lattice}")
    k = f.lattice.half_width
    full = np.convolve(f.coeffs, g.coeffs)
    return SpectralField(f.lattice, full[k:3 * k + 1] / (SQRT_2PI * f.lam))


def embed(f: SpectralField, lattice: FrequencyLattice) -> SpectralField:
    """Zero-pad f onto a lattice with the same lam and a cutoff at least as large."""
    if lattice.lam != f.lam:
        raise LatticeError(f"embed keeps lambda fixed: {f.lam} -> {lattice.lam}")
    if lattice.cutoff < f.lattice.cutoff:
        raise LatticeError(f"embed cannot shrink cutoff {f.lattice.cutoff} -> {lattice.cutoff}")
    c = np.zeros(lattice.mode_count, dtype=np.complex128)
    off = lattice.half_width - f.lattice.half_width
    c[off:off + f.lattice.mode_count] = f.coeffs
    return SpectralField(lattice, c)


def _complex_gaussian(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)


def random_gaussian_data(
    lattice: FrequencyLattice,
    alpha: float,
    seed: int,
    amplitude: float = SQRT_2PI,
) -> SpectralField:
    """u^(n) = amplitude * g_n / <n>^alpha on the unit torus, g_n standard complex Gaussians."""
    if alpha < 0:
        raise LatticeError(f"alpha must be >= 0, got {alpha}")
    if lattice.lam != 1:
        raise LatticeError("random_gaussian_data is defined on the unit torus (lambda=1)")
    rng = np.random.default_rng(seed)
    n = lattice.modes()
    g = _complex_gaussian(rng, lattice.mode_count)
    return SpectralField(lattice, amplitude * g / (1.0 + n ** 2) ** (alpha / 2.0))


def random_band_limited(
    lattice: FrequencyLattice,
    support: float,
    seed: int,
    amplitude: float = 1.0,
) -> SpectralField:
    """Gaussian coefficients on |xi| <= support, zero elsewhere, any lam."""
    if support < 0 or support > lattice.cutoff:
        raise LatticeError(f"support {support} outside [0, {lattice.cutoff}]")
    rng = np.random.default_rng(seed)
    g = _complex_gaussian(rng, lattice.mode_count)
    g[np.abs(lattice.modes()) > support] = 0.0
    return SpectralField(lattice, amplitude * g)


def field_to_json(f: SpectralField) -> Dict[str, Any]:
    return {
        "lambda": f.lam,
        "cutoff": f.lattice.cutoff,
        "coeffs": [[float(z.real), float(z.imag)] for z in f.coeffs],
    }


def field_from_json(obj: Dict[str, Any]) -> SpectralField:
    try:
        lattice = make_lattice(obj["lambda"], obj["cutoff"])
        pairs = np.asarray(obj["coeffs"], dtype=np.float64).reshape(-1, 2)
    except (KeyError, TypeError, ValueError) as e:
        raise LatticeError(f"malformed field record: {e}")
    return SpectralField(lattice, pairs[:, 0] + 1j * pairs[:, 1])


def dump_binary(f: SpectralField) -> bytes:
    payload = np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()
    return _HEADER.pack(f.lam, f.lattice.cutoff) + payload


def load_binary(data: bytes) -> SpectralField:
    if len(data) < _HEADER.size:
        raise LatticeError("binary field shorter than header")
    lam, cutoff = _HEADER.unpack_from(data)
    lattice = make_lattice(lam, cutoff)
    body = data[_HEADER.size:]
    if len(body) != 16 * lattice.mode_count:
        raise LatticeError(f"payload of {len(body)} bytes does not match {lattice.mode_count} modes")
    return SpectralField(lattice, np.frombuffer(body, dtype="<c16").astype(np.complex128))


def write_field(path: str, f: SpectralField) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if path.endswith(".json"):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(field_to_json(f), fh)
    else:
        with open(path, "wb") as fh:
            fh.write(dump_binary(f))
    log.debug(f"wrote field lam={f.lam} cutoff={f.lattice.cutoff} -> {path}")
    return path


def read_field(path: str) -> SpectralField:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return field_from_json(json.load(fh))
    with open(path, "rb") as fh:
        return load_binary(fh.read())


__all__ = [
    "SQRT_2PI",
    "LatticeError",
    "FrequencyLattice",
    "SpectralField",
    "make_lattice",
    "zero_field",
    "single_mode",
    "mass",
    "samples_from_coeffs",
    "coeffs_from_samples",
    "synthesize",
    "analyze",
    "convolve",
    "embed",
    "random_gaussian_data",
    "random_band_limited",
    "field_to_json",
    "field_from_json",
    "dump_binary",
    "load_binary",
    "write_field",
    "read_field",
]
