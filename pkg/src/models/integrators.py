"""
Time steppers for the spectral equation models.

Provides:
- SpectralGrid: physical/spectral transforms on the (optionally padded) product grid
- StrangSplit: half linear step, exact pointwise phase rotation, half linear step
- IntegratingFactorRK4: Lawson RK4 on the interaction variable e^{-tL} u^
- make_integrator(kind, model, grid, dt, coupling)
"""

import math

import numpy as np

from src.lattice import FrequencyLattice, coeffs_from_samples, samples_from_coeffs
from src.models.models import EquationModel


class SpectralGrid:
    """Physical grid for nonlinear terms.

    With dealias on, products are formed on the padded grid of size
    >= 2 * mode_count, which keeps every cubic interaction of retained modes
    from aliasing back onto the lattice; the result is Galerkin-truncated.
    Without dealias the grid has exactly mode_count points, so the transform
    pair is unitary.
    """

    def __init__(self, lattice: FrequencyLattice, dealias: bool = True, size: int | None = None):
        self.lattice = lattice
        self.dealias = dealias
        if size is None:
            size = lattice.default_grid() if dealias else lattice.mode_count
        self.size = int(size)
        if self.size < lattice.mode_count:
            raise ValueError(f"grid {self.size} smaller than mode_count {lattice.mode_count}")
        self.xi = lattice.modes()

    def nyquist(self) -> float:
        return self.size / (2.0 * self.lattice.lam)

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        return samples_from_coeffs(c, self.lattice, self.size)

    def to_spectral(self, u: np.ndarray) -> np.ndarray:
        return coeffs_from_samples(u, self.lattice)

    def derivative(self, c: np.ndarray) -> np.ndarray:
        return self.to_physical(1j * self.xi * c)

    def mean_intensity(self, c: np.ndarray) -> float:
        lam = self.lattice.lam
        return math.fsum(np.abs(c) ** 2) / lam / (2.0 * math.pi * lam)


class _Stepper:
    name = "stepper"

    def __init__(self, model: EquationModel, grid: SpectralGrid, dt: float, coupling: float = 1.0):
        self.model = model
        self.grid = grid
        self.dt = float(dt)
        self.coupling = float(coupling)
        self.symbol = model.linear_symbol(grid.xi)

    def nonlinear_hat(self, c: np.ndarray) -> np.ndarray:
        if self.coupling == 0.0:
            return np.zeros_like(c)
        u = self.grid.to_physical(c)
        ux = self.grid.derivative(c)
        n = self.model.nonlinear(u, ux, self.grid.mean_intensity(c))
        return self.coupling * self.grid.to_spectral(n)

    def step(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class StrangSplit(_Stepper):
    name = "strang"

    def __init__(self, model: EquationModel, grid: SpectralGrid, dt: float, coupling: float = 1.0):
        if not model.phase_nonlinearity:
            raise ValueError(f"Strang splitting needs a phase nonlinearity, {model.name} has a derivative term")
        super().__init__(model, grid, dt, coupling)
        self.half = np.exp(self.symbol * (self.dt / 2.0))

    def step(self, c: np.ndarray) -> np.ndarray:
        c = self.half * c
        if self.coupling != 0.0:
            mu = self.grid.mean_intensity(c)
            u = self.grid.to_physical(c)
            rate = self.coupling * self.model.phase_rate(u, mu)
            c = self.grid.to_spectral(u * np.exp(1j * rate * self.dt))
        return self.half * c


class IntegratingFactorRK4(_Stepper):
    name = "ifrk4"

    def __init__(self, model: EquationModel, grid: SpectralGrid, dt: float, coupling: float = 1.0):
        super().__init__(model, grid, dt, coupling)
        self.e_half = np.exp(self.symbol * (self.dt / 2.0))
        self.e_full = self.e_half * self.e_half

    def step(self, c: np.ndarray) -> np.ndarray:
        dt, e1, e2 = self.dt, self.e_half, self.e_full
        k1 = self.nonlinear_hat(c)
        k2 = self.nonlinear_hat(e1 * (c + 0.5 * dt * k1))
        k3 = self.nonlinear_hat(e1 * c + 0.5 * dt * k2)
        k4 = self.nonlinear_hat(e2 * c + dt * e1 * k3)
        return e2 * c + (dt / 6.0) * (e2 * k1 + 2.0 * e1 * (k2 + k3) + k4)


INTEGRATORS = {cls.name: cls for cls in (StrangSplit, IntegratingFactorRK4)}


def make_integrator(kind: str, model: EquationModel, grid: SpectralGrid, dt: float, coupling: float = 1.0) -> _Stepper:
    if kind not in INTEGRATORS:
        raise ValueError(f"unknown integrator: {kind}")
    return INTEGRATORS[kind](model, grid, dt, coupling)


__all__ = ["SpectralGrid", "StrangSplit", "IntegratingFactorRK4", "INTEGRATORS", "make_integrator"]
