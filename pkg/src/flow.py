"""
Dispersive flows on dilated tori.

Provides:
- Integrator, FlowSpec, Trajectory, ResidualReport
- FlowConfigError, FlowBlowupError
- step(state, spec) -> SpectralField
- evolve(u0, spec, T, snap_times=None, norms=()) -> Trajectory
- residual(traj, equation) -> ResidualReport

NLS-family equations may use Strang splitting or IFRK4; mKdV-family
equations have a derivative nonlinearity and require IFRK4.
"""

import enum
import math
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from src.lattice import SpectralField, mass
from src.models.integrators import SpectralGrid, make_integrator
from src.models.models import EquationModel, equation_from_dict
from src.spaces import NormSpec, norm_value
from src.utilis import NumericalGuardError, get_logger

log = get_logger("flow")

BLOWUP_GROWTH = 0.10
_TIME_TOL = 1e-9


class FlowConfigError(ValueError):
    """Invalid flow configuration or trajectory layout."""


class FlowBlowupError(NumericalGuardError):
    """L^2 norm grew by more than BLOWUP_GROWTH in one step."""


class Integrator(str, enum.Enum):
    STRANG_SPLIT = "strang"
    INTEGRATING_FACTOR_RK4 = "ifrk4"


@dataclass(frozen=True)
class FlowSpec:
    equation: EquationModel
    dt: float = 1e-3
    integrator: Integrator = Integrator.STRANG_SPLIT
    dealias: bool = True
    coupling: float = 1.0
    grid: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "integrator", Integrator(self.integrator))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise FlowConfigError(f"dt must be positive, got {self.dt}")
        if self.integrator is Integrator.STRANG_SPLIT and not self.equation.phase_nonlinearity:
            raise FlowConfigError(f"{self.equation.name} requires the ifrk4 integrator")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "equation": self.equation.to_dict(),
            "dt": self.dt,
            "integrator": self.integrator.value,
            "dealias": self.dealias,
            "coupling": self.coupling,
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "FlowSpec":
        try:
            return cls(
                equation=equation_from_dict(obj["equation"]),
                dt=float(obj.get("dt", 1e-3)),
                integrator=obj.get("integrator", Integrator.STRANG_SPLIT.value),
                dealias=bool(obj.get("dealias", True)),
                coupling=float(obj.get("coupling", 1.0)),
                grid=obj.get("grid"),
            )
        except (KeyError, TypeError) as e:
            raise FlowConfigError(f"malformed flow spec: {e}")

    def with_dt(self, dt: float) -> "FlowSpec":
        return FlowSpec(self.equation, dt, self.integrator, self.dealias, self.coupling, self.grid)


def _grid_for(spec: FlowSpec, state: SpectralField) -> SpectralGrid:
    grid = SpectralGrid(state.lattice, spec.dealias, spec.grid)
    if spec.dealias and state.lattice.cutoff > (2.0 / 3.0) * grid.nyquist():
        raise FlowConfigError(
            f"cutoff {state.lattice.cutoff} exceeds 2/3 of grid Nyquist {grid.nyquist():.3g}"
        )
    return grid


def _guarded(before: float, c: np.ndarray, lam: int, where: str) -> None:
    if not np.all(np.isfinite(c)):
        raise FlowBlowupError(f"non-finite state {where}")
    after = math.fsum(np.abs(c) ** 2) / lam
    if before > 0 and math.sqrt(after / before) > 1.0 + BLOWUP_GROWTH:
        raise FlowBlowupError(
            f"L2 norm grew by {math.sqrt(after / before) - 1:.1%} in one step {where}"
        )


class _Runner:
    def __init__(self, spec: FlowSpec, state: SpectralField):
        self.grid = _grid_for(spec, state)
        self.stepper = make_integrator(spec.integrator.value, spec.equation, self.grid, spec.dt, spec.coupling)
        self.lam = state.lam

    def advance(self, c: np.ndarray, where: str = "") -> np.ndarray:
        before = math.fsum(np.abs(c) ** 2) / self.lam
        out = self.stepper.step(c)
        _guarded(before, out, self.lam, where)
        return out


def step(state: SpectralField, spec: FlowSpec) -> SpectralField:
    """Advance one dt."""
    return state.with_coeffs(_Runner(spec, state).advance(np.array(state.coeffs)))


def _diagnostics(t: float, u: SpectralField, norms: Sequence[NormSpec]) -> Dict[str, float]:
    d = {"t": t, "l2": u.l2_norm()}
    for i, spec in enumerate(norms):
        d[_norm_key(spec, i)] = norm_value(u, spec)
    return d


def _norm_key(spec: NormSpec, i: int) -> str:
    return f"{spec.kind.value}[{i}]"


@dataclass
class Trajectory:
    spec: FlowSpec
    snapshots: List[Tuple[float, SpectralField]]
    diagnostics: List[Dict[str, float]] = dc_field(default_factory=list)
    norms: Tuple[NormSpec, ...] = ()

    def __post_init__(self) -> None:
        if not self.snapshots:
            raise FlowConfigError("trajectory needs at least one snapshot")
        times = [t for t, _ in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise FlowConfigError("snapshot times must be strictly increasing")
        lattice = self.snapshots[0][1].lattice
        if any(u.lattice != lattice for _, u in self.snapshots):
            raise FlowConfigError("all snapshots must share one lattice")
        if not self.diagnostics:
            self.diagnostics = [_diagnostics(t, u, self.norms) for t, u in self.snapshots]

    @property
    def times(self) -> List[float]:
        return [t for t, _ in self.snapshots]

    @property
    def fields(self) -> List[SpectralField]:
        return [u for _, u in self.snapshots]

    @property
    def lattice(self):
        return self.snapshots[0][1].lattice

    def final(self) -> SpectralField:
        return self.snapshots[-1][1]

    def with_snapshots(self, snapshots: List[Tuple[float, SpectralField]], spec: FlowSpec | None = None) -> "Trajectory":
        return Trajectory(spec or self.spec, list(snapshots), norms=self.norms)

    def mass_drift(self) -> float:
        m0 = mass(self.snapshots[0][1])
        if m0 == 0:
            return 0.0
        return max(abs(mass(u) - m0) for _, u in self.snapshots) / m0


def _snap_steps(spec: FlowSpec, T: float, snap_times: Sequence[float] | None) -> Tuple[int, List[int]]:
    if T < 0:
        raise FlowConfigError(f"final time must be >= 0, got {T}")
    n_steps = int(round(T / spec.dt))
    if abs(n_steps * spec.dt - T) > _TIME_TOL * max(1.0, T):
        raise FlowConfigError(f"T={T} is not a multiple of dt={spec.dt}")
    if snap_times is None:
        return n_steps, sorted({0, n_steps})
    steps = []
    for t in snap_times:
        k = int(round(t / spec.dt))
        if t < 0 or t > T + _TIME_TOL or abs(k * spec.dt - t) > _TIME_TOL * max(1.0, abs(t)):
            raise FlowConfigError(f"snapshot time {t} is not a multiple of dt in [0, {T}]")
        steps.append(k)
    return n_steps, sorted(set(steps))


def evolve(
    u0: SpectralField,
    spec: FlowSpec,
    T: float,
    snap_times: Sequence[float] | None = None,
    norms: Sequence[NormSpec] = (),
) -> Trajectory:
    """Run the flow to time T, recording snapshots at snap_times (default {0, T})."""
    n_steps, wanted = _snap_steps(spec, T, snap_times)
    runner = _Runner(spec, u0)
    c = np.array(u0.coeffs)
    snaps: List[Tuple[float, SpectralField]] = []
    if wanted and wanted[0] == 0:
        snaps.append((0.0, u0))
    pending = [k for k in wanted if k > 0]
    log.info(f"{spec.equation.name} lam={u0.lam} cutoff={u0.lattice.cutoff} steps={n_steps} dt={spec.dt}")
    for k in range(1, n_steps + 1):
        c = runner.advance(c, where=f"at step {k}")
        if pending and pending[0] == k:
            pending.pop(0)
            snaps.append((k * spec.dt, u0.with_coeffs(c)))
            log.debug(f"snapshot t={k * spec.dt:.6g}")
    traj = Trajectory(spec, snaps, norms=tuple(norms))
    log.info(f"done, mass drift {traj.mass_drift():.3e}")
    return traj


@dataclass(frozen=True)
class ResidualReport:
    times: List[float]
    norms: List[float]

    @property
    def max(self) -> float:
        return max(self.norms) if self.norms else 0.0


def residual(traj: Trajectory, equation: EquationModel) -> ResidualReport:
    """L^2 norm of u_t - L u - N(u) at interior snapshots.

    The time derivative is a centered difference of the interaction variable
    e^{-tL} u^, so the linear part of the target equation is integrated
    exactly and only the nonlinear dynamics are differenced.
    """
    if len(traj.snapshots) < 3:
        raise FlowConfigError("residual needs at least 3 snapshots")
    times = np.array(traj.times)
    gaps = np.diff(times)
    h = float(gaps[0])
    if np.max(np.abs(gaps - h)) > 1e-9 * max(1.0, h):
        raise FlowConfigError("snapshots are not equispaced in time")

    lattice = traj.lattice
    grid = SpectralGrid(lattice, traj.spec.dealias, traj.spec.grid)
    stepper = make_integrator("ifrk4", equation, grid, h, traj.spec.coupling)
    back = np.exp(-stepper.symbol * h)
    fwd = np.exp(stepper.symbol * h)
    fields = traj.fields
    out_t: List[float] = []
    out_n: List[float] = []
    for i in range(1, len(fields) - 1):
        dvdt = (back * fields[i + 1].coeffs - fwd * fields[i - 1].coeffs) / (2.0 * h)
        r = dvdt - stepper.nonlinear_hat(np.array(fields[i].coeffs))
        out_t.append(float(times[i]))
        out_n.append(math.sqrt(math.fsum(np.abs(r) ** 2) / lattice.lam))
    return ResidualReport(out_t, out_n)


__all__ = [
    "BLOWUP_GROWTH",
    "FlowConfigError",
    "FlowBlowupError",
    "Integrator",
    "FlowSpec",
    "Trajectory",
    "ResidualReport",
    "step",
    "evolve",
    "residual",
]
