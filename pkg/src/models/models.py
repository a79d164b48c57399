"""
Evolution equations as spectral models on a dilated torus.

Each model exposes the Fourier symbol L(xi) of its linear part (u^_t = L u^
+ N(u)^) and its nonlinear term N evaluated from physical samples. The sign
follows the upper/lower choice in the equations: DEFOCUSING is the upper sign.

    NLS              i u_t = u_xx - 2 s |u|^2 u
    RenormalizedNLS  i u_t = u_xx - 2 s (|u|^2 - 2 mu) u
    MKdV             u_t = -u_xxx + 6 s |u|^2 u_x
    RenormalizedMKdV u_t = -u_xxx + 6 s (|u|^2 - mu) u_x
    MKdVNLS          u_t = -u_xxx - 3i beta u_xx + 6 s |u|^2 u_x + 6i s beta |u|^2 u

with s = +1 (defocusing) or -1 (focusing) and mu the mean intensity.
"""

import enum
from typing import Any, Dict

import numpy as np


class Sign(str, enum.Enum):
    DEFOCUSING = "defocusing"
    FOCUSING = "focusing"

    @property
    def value_sign(self) -> int:
        return 1 if self is Sign.DEFOCUSING else -1


class EquationModel:
    """Base class: linear symbol plus nonlinear term."""

    name = "equation"
    time_exponent = 2
    # whether the nonlinear substep is an exact phase rotation
    phase_nonlinearity = False

    def __init__(self, sign: Sign | str = Sign.DEFOCUSING):
        self.sign = Sign(sign)

    @property
    def sigma(self) -> int:
        return self.sign.value_sign

    def linear_symbol(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def nonlinear(self, u: np.ndarray, ux: np.ndarray, mu: float) -> np.ndarray:
        """Physical-space nonlinear term N(u); ux is the spatial derivative."""
        raise NotImplementedError

    def phase_rate(self, u: np.ndarray, mu: float) -> np.ndarray:
        """Real rate w with N(u) = i w u, only for phase nonlinearities."""
        raise NotImplementedError(f"{self.name} has no pointwise phase substep")

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "sign": self.sign.value}

    def __eq__(self, other: object) -> bool:
        return type(self) is type(other) and self.to_dict() == other.to_dict()  # type: ignore[attr-defined]

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.to_dict().items())))

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "name")
        return f"{type(self).__name__}({args})"


class NLS(EquationModel):
    name = "nls"
    time_exponent = 2
    phase_nonlinearity = True
    _mu_factor = 0.0

    def linear_symbol(self, xi: np.ndarray) -> np.ndarray:
        return 1j * np.square(xi)

    def phase_rate(self, u: np.ndarray, mu: float) -> np.ndarray:
        return 2.0 * self.sigma * (np.abs(u) ** 2 - self._mu_factor * mu)

    def nonlinear(self, u: np.ndarray, ux: np.ndarray, mu: float) -> np.ndarray:
        return 1j * self.phase_rate(u, mu) * u


class RenormalizedNLS(NLS):
    name = "renormalized_nls"
    _mu_factor = 2.0


class MKdV(EquationModel):
    name = "mkdv"
    time_exponent = 3
    _mu_factor = 0.0

    def linear_symbol(self, xi: np.ndarray) -> np.ndarray:
        return 1j * xi ** 3

    def nonlinear(self, u: np.ndarray, ux: np.ndarray, mu: float) -> np.ndarray:
        return 6.0 * self.sigma * (np.abs(u) ** 2 - self._mu_factor * mu) * ux


class RenormalizedMKdV(MKdV):
    name = "renormalized_mkdv"
    _mu_factor = 1.0


class MKdVNLS(MKdV):
    name = "mkdv_nls"

    def __init__(self, sign: Sign | str = Sign.DEFOCUSING, beta: float = 1.0):
        super().__init__(sign)
        self.beta = float(beta)

    def linear_symbol(self, xi: np.ndarray) -> np.ndarray:
        return 1j * xi ** 3 + 3j * self.beta * np.square(xi)

    def nonlinear(self, u: np.ndarray, ux: np.ndarray, mu: float) -> np.ndarray:
        amp = np.abs(u) ** 2
        return 6.0 * self.sigma * amp * (ux + 1j * self.beta * u)

    def to_dict(self) -> Dict[str, Any]:
        d = super().to_dict()
        d["beta"] = self.beta
        return d


EQUATIONS = {
    cls.name: cls for cls in (NLS, RenormalizedNLS, MKdV, RenormalizedMKdV, MKdVNLS)
}


def equation_from_dict(obj: Dict[str, Any]) -> EquationModel:
    name = obj.get("name")
    if name not in EQUATIONS:
        raise ValueError(f"unknown equation: {name}")
    if name == MKdVNLS.name:
        return MKdVNLS(obj.get("sign", Sign.DEFOCUSING), obj.get("beta", 1.0))
    return EQUATIONS[name](obj.get("sign", Sign.DEFOCUSING))


def make_equation(name: str, sign: Sign | str = Sign.DEFOCUSING, beta: float | None = None) -> EquationModel:
    if name == MKdVNLS.name:
        if beta is None:
            raise ValueError("mkdv_nls requires beta")
        return MKdVNLS(sign, beta)
    if beta is not None:
        raise ValueError(f"beta is only meaningful for mkdv_nls, not {name}")
    return equation_from_dict({"name": name, "sign": sign})


__all__ = [
    "Sign",
    "EquationModel",
    "NLS",
    "RenormalizedNLS",
    "MKdV",
    "RenormalizedMKdV",
    "MKdVNLS",
    "EQUATIONS",
    "equation_from_dict",
    "make_equation",
]
