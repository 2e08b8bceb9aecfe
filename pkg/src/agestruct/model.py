"""Model parameters, crowding feedbacks, initial age densities, and fits.

Fertility is a polynomial-times-exponential age profile
``sum_i beta_i * a**i * exp(-rho * a)`` scaled by ``r0`` and damped by a
decreasing function ``phi`` of total population size; mortality is a base
rate ``mu0`` plus an increasing crowding term ``psi`` of population size.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import FitSingularError, ParameterError
from .quadrature import simpson

if TYPE_CHECKING:  # pragma: no cover
    from .reduction import StateVector


def _scalar_or_array(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# feedback families


@dataclass(frozen=True)
class ExponentialPhi:
    """Fertility damping exp(-x / k): 1 at zero crowding, vanishing at infinity."""

    k: float

    def __post_init__(self):
        if not (self.k > 0):
            raise ParameterError("phi exponential family: k must be > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.exp(-x / self.k))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, -np.exp(-x / self.k) / self.k)


@dataclass(frozen=True)
class HillPhi:
    """Fertility damping 1 / (1 + (x/k)**m) with half-saturation k and slope m >= 1."""

    k: float
    m: float = 1.0

    def __post_init__(self):
        if not (self.k > 0):
            raise ParameterError("phi hill family: k must be > 0")
        if not (self.m >= 1):
            raise ParameterError("phi hill family: m must be >= 1")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, 1.0 / (1.0 + (x / self.k) ** self.m))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        u = (x / self.k) ** self.m
        d = -(self.m / self.k) * (x / self.k) ** (self.m - 1.0) / (1.0 + u) ** 2
        return _scalar_or_array(x, d)


@dataclass(frozen=True)
class LinearPsi:
    """Crowding mortality c * x."""

    c: float

    def __post_init__(self):
        if not (self.c > 0):
            raise ParameterError("psi linear family: c must be > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self.c * x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, np.full_like(x, self.c))


@dataclass(frozen=True)
class PowerPsi:
    """Crowding mortality c * x**gamma with gamma >= 1."""

    c: float
    gamma: float

    def __post_init__(self):
        if not (self.c > 0):
            raise ParameterError("psi power family: c must be > 0")
        if not (self.gamma >= 1):
            raise ParameterError("psi power family: gamma must be >= 1")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self.c * x ** self.gamma)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar_or_array(x, self.c * self.gamma * x ** (self.gamma - 1.0))


@dataclass(frozen=True)
class FeedbackSpec:
    """Pair of crowding feedbacks, or the degenerate linear mode.

    In linear mode the damping is identically 1 and the crowding mortality
    identically 0 (with zero derivatives); this turns the model into a linear
    one and is meant for closed-form integrator checks, not production runs.
    """

    phi_family: object | None = None
    psi_family: object | None = None
    linear_mode: bool = False

    def __post_init__(self):
        if self.linear_mode:
            if self.phi_family is not None or self.psi_family is not None:
                raise ParameterError("linear_mode excludes phi/psi families")
        else:
            if self.phi_family is None or self.psi_family is None:
                raise ParameterError("feedback requires both phi and psi families")

    @classmethod
    def linear(cls) -> "FeedbackSpec":
        return cls(linear_mode=True)

    def phi(self, x):
        if self.linear_mode:
            x = np.asarray(x, dtype=float)
            return _scalar_or_array(x, np.ones_like(x))
        return self.phi_family(x)

    def phi_prime(self, x):
        if self.linear_mode:
            x = np.asarray(x, dtype=float)
            return _scalar_or_array(x, np.zeros_like(x))
        return self.phi_family.derivative(x)

    def psi(self, x):
        if self.linear_mode:
            x = np.asarray(x, dtype=float)
            return _scalar_or_array(x, np.zeros_like(x))
        return self.psi_family(x)

    def psi_prime(self, x):
        if self.linear_mode:
            x = np.asarray(x, dtype=float)
            return _scalar_or_array(x, np.zeros_like(x))
        return self.psi_family.derivative(x)


_PHI_FAMILIES = {"exponential": ExponentialPhi, "hill": HillPhi}
_PSI_FAMILIES = {"linear": LinearPsi, "power": PowerPsi}


def make_phi(family: str, **params):
    """Build a fertility-damping family by name ('exponential' or 'hill')."""
    try:
        cls = _PHI_FAMILIES[family]
    except KeyError:
        raise ParameterError(f"unknown phi family {family!r}") from None
    return cls(**params)


def make_psi(family: str, **params):
    """Build a crowding-mortality family by name ('linear' or 'power')."""
    try:
        cls = _PSI_FAMILIES[family]
    except KeyError:
        raise ParameterError(f"unknown psi family {family!r}") from None
    return cls(**params)


# ---------------------------------------------------------------------------
# parameters


def fertility_kernel_integral(betas: Sequence[float], rate: float) -> float:
    """Closed form of the age integral sum_i beta_i * i! / rate**(i+1).

    This equals the integral over ages of the raw fertility profile weighted
    by exp(-(rate - rho) * a) when rate already includes rho.
    """
    if not (rate > 0):
        raise ParameterError("kernel integral needs a positive decay rate")
    return float(sum(b * math.factorial(i) / rate ** (i + 1) for i, b in enumerate(betas)))


def normalize_betas(betas: Sequence[float], rho: float, mu0: float) -> tuple[float, ...]:
    """Rescale profile coefficients so the zero-crowding generation integral is 1.

    After rescaling, sum_i beta_i * i! / (rho + mu0)**(i+1) == 1, which makes
    the net reproduction number at zero population equal r0.
    """
    if not (rho > 0 and mu0 > 0):
        raise ParameterError("normalize_betas requires rho > 0 and mu0 > 0")
    betas = tuple(float(b) for b in betas)
    if len(betas) == 0 or any(b <= 0 for b in betas):
        raise ParameterError("normalize_betas requires a nonempty, positive coefficient list")
    s = fertility_kernel_integral(betas, rho + mu0)
    return tuple(b / s for b in betas)


@dataclass(frozen=True)
class ModelParams:
    """Static model parameters.

    n        length of the fertility polynomial (number of coefficients)
    betas    positive profile coefficients beta_0 .. beta_{n-1}
    rho      exponential age-decay rate of the fertility profile
    mu0      base mortality rate
    r0       fertility scale; equals the zero-crowding net reproduction
             number when the betas are normalized
    """

    n: int
    betas: tuple[float, ...]
    rho: float
    mu0: float
    r0: float
    normalized: bool = False

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ParameterError("n must be an integer >= 1")
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "betas", betas)
        if len(betas) != self.n:
            raise ParameterError(f"expected {self.n} betas, got {len(betas)}")
        for i, b in enumerate(betas):
            if not math.isfinite(b) or b <= 0:
                raise ParameterError(f"betas[{i}] must be finite and > 0")
        for name in ("rho", "mu0", "r0"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be finite and > 0")
        if self.normalized:
            s = fertility_kernel_integral(betas, self.rho + self.mu0)
            if abs(s - 1.0) > 1e-12:
                raise ParameterError(
                    f"betas flagged normalized but the generation integral is {s!r}"
                )

    def with_r0(self, r0: float) -> "ModelParams":
        return ModelParams(self.n, self.betas, self.rho, self.mu0, float(r0), self.normalized)


def fertility_age_profile(a, params: ModelParams):
    """Raw (undamped) fertility profile sum_i beta_i * a**i * exp(-rho * a)."""
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr < 0):
        raise ParameterError("ages must be nonnegative")
    return _scalar_or_array(a, _profile_values(a_arr, params.betas, params.rho))


def _profile_values(a: np.ndarray, betas: Sequence[float], rho: float) -> np.ndarray:
    # Horner evaluation of the polynomial part
    acc = np.zeros_like(a)
    for b in reversed(betas):
        acc = acc * a + b
    return acc * np.exp(-rho * a)


# ---------------------------------------------------------------------------
# qualitative assumption checks


@dataclass(frozen=True)
class ClauseResult:
    clause: str
    passed: bool
    violating_point: float | None = None


@dataclass(frozen=True)
class AssumptionReport:
    clauses: tuple[ClauseResult, ...]
    exempt: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)


def _first_violation(grid: np.ndarray, ok: np.ndarray) -> float | None:
    idx = np.flatnonzero(~ok)
    return float(grid[idx[0]]) if idx.size else None


def check_assumptions(
    feedback: FeedbackSpec,
    grid,
    *,
    big_x: float = 1e8,
    phi_inf_tol: float = 1e-4,
    psi_inf_floor: float = 1e4,
) -> AssumptionReport:
    """Check the qualitative feedback requirements on a sample grid.

    phi must be nonnegative and strictly decreasing with phi(0) = 1 and a
    vanishing limit; psi must be nonnegative and strictly increasing with
    psi(0) = 0 and an unbounded limit. The limits are probed at ``big_x``.
    Linear mode is exempt and reports an empty, passing result.
    """
    if feedback.linear_mode:
        return AssumptionReport(clauses=(), exempt=True)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("assumption grid must be a nonempty 1-d array")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ParameterError("assumption grid must be nonnegative and strictly increasing")

    phi_v = np.asarray(feedback.phi(grid), dtype=float)
    phi_d = np.asarray(feedback.phi_prime(grid), dtype=float)
    psi_v = np.asarray(feedback.psi(grid), dtype=float)
    psi_d = np.asarray(feedback.psi_prime(grid), dtype=float)

    clauses = (
        ClauseResult("phi >= 0", bool(np.all(phi_v >= 0)), _first_violation(grid, phi_v >= 0)),
        ClauseResult("phi' < 0", bool(np.all(phi_d < 0)), _first_violation(grid, phi_d < 0)),
        ClauseResult("phi(0) = 1", abs(float(feedback.phi(0.0)) - 1.0) <= 1e-12, 0.0),
        ClauseResult(
            "phi(inf) = 0", float(feedback.phi(big_x)) < phi_inf_tol, float(big_x)
        ),
        ClauseResult("psi >= 0", bool(np.all(psi_v >= 0)), _first_violation(grid, psi_v >= 0)),
        ClauseResult("psi' > 0", bool(np.all(psi_d > 0)), _first_violation(grid, psi_d > 0)),
        ClauseResult("psi(0) = 0", abs(float(feedback.psi(0.0))) <= 1e-12, 0.0),
        ClauseResult(
            "psi(inf) = inf", float(feedback.psi(big_x)) > psi_inf_floor, float(big_x)
        ),
    )
    return AssumptionReport(clauses=clauses)


# ---------------------------------------------------------------------------
# initial age densities


class InitialDensity(ABC):
    """Initial age distribution of the population."""

    kind: str

    @abstractmethod
    def evaluate(self, a):
        """Density value at age(s) a; zero outside the support."""

    @abstractmethod
    def mass(self) -> float:
        """Total initial population, the integral of the density over all ages."""

    @abstractmethod
    def weighted_moment(self, i: int, rho: float) -> float:
        """Integral of a**(i-1) * exp(-rho*a) times the density, for i >= 1."""

    @abstractmethod
    def support_end(self, tail_tol: float = 1e-14) -> float:
        """Age beyond which the remaining mass fraction is at most tail_tol."""

    def __call__(self, a):
        return self.evaluate(a)


@dataclass(frozen=True)
class ExponentialDensity(InitialDensity):
    """Density coefficient * exp(-decay * a) on all nonnegative ages."""

    coefficient: float
    decay: float
    kind = "exponential"

    def __post_init__(self):
        if not (self.coefficient >= 0):
            raise ParameterError("exponential density: coefficient must be >= 0")
        if not (self.decay > 0):
            raise ParameterError("exponential density: decay must be > 0")

    def evaluate(self, a):
        a_arr = np.asarray(a, dtype=float)
        vals = np.where(a_arr >= 0, self.coefficient * np.exp(-self.decay * np.maximum(a_arr, 0.0)), 0.0)
        return _scalar_or_array(a, vals)

    def mass(self) -> float:
        return self.coefficient / self.decay

    def weighted_moment(self, i: int, rho: float) -> float:
        if i < 1:
            raise ParameterError("weighted_moment index must be >= 1")
        return self.coefficient * math.factorial(i - 1) / (rho + self.decay) ** i

    def support_end(self, tail_tol: float = 1e-14) -> float:
        if self.coefficient == 0.0:
            return 0.0
        return math.log(1.0 / tail_tol) / self.decay


@dataclass(frozen=True, eq=False)
class TabulatedDensity(InitialDensity):
    """Piecewise-linear density on a strictly increasing age table, zero outside."""

    ages: np.ndarray
    values: np.ndarray
    kind = "tabulated"

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if ages.ndim != 1 or values.shape != ages.shape or ages.size < 2:
            raise ParameterError("tabulated density needs matching 1-d tables of length >= 2")
        if ages[0] < 0 or np.any(np.diff(ages) <= 0):
            raise ParameterError("tabulated ages must be nonnegative and strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ParameterError("tabulated values must be finite and nonnegative")
        ages.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "values", values)

    def evaluate(self, a):
        a_arr = np.asarray(a, dtype=float)
        vals = np.interp(a_arr, self.ages, self.values, left=0.0, right=0.0)
        inside = (a_arr >= self.ages[0]) & (a_arr <= self.ages[-1])
        vals = np.where(inside, vals, 0.0)
        return _scalar_or_array(a, vals)

    def mass(self) -> float:
        return simpson(self.values, self.ages)

    def weighted_moment(self, i: int, rho: float) -> float:
        if i < 1:
            raise ParameterError("weighted_moment index must be >= 1")
        integrand = self.ages ** (i - 1) * np.exp(-rho * self.ages) * self.values
        return simpson(integrand, self.ages)

    def support_end(self, tail_tol: float = 1e-14) -> float:
        return float(self.ages[-1])


def density_moments(p0: InitialDensity, rho: float, n: int) -> "StateVector":
    """Initial ODE state from a density: total mass plus the n weighted moments."""
    from .reduction import StateVector

    if not (rho > 0) or n < 1:
        raise ParameterError("density_moments requires rho > 0 and n >= 1")
    return StateVector(
        p=p0.mass(),
        moments=tuple(p0.weighted_moment(i, rho) for i in range(1, n + 1)),
    )


# ---------------------------------------------------------------------------
# profile fitting


@dataclass(frozen=True)
class FertilityFit:
    betas: tuple[float, ...]
    residual_norm: float


def fit_fertility_profile(ages, values, n: int, rho: float) -> FertilityFit:
    """Least-squares coefficients of the age profile on tabulated fertility data.

    Solves the normal equations for the design matrix with columns
    a**i * exp(-rho*a), i = 0..n-1. Raises FitSingularError when the design
    is rank deficient (for example fewer than n distinct ages).
    """
    ages = np.asarray(ages, dtype=float)
    values = np.asarray(values, dtype=float)
    if ages.ndim != 1 or values.shape != ages.shape:
        raise ParameterError("fit expects matching 1-d age/value arrays")
    if np.any(ages < 0):
        raise ParameterError("fit ages must be nonnegative")
    if n < 1 or not (rho > 0):
        raise ParameterError("fit requires n >= 1 and rho > 0")

    design = ages[:, None] ** np.arange(n)[None, :] * np.exp(-rho * ages)[:, None]
    gram = design.T @ design
    rhs_vec = design.T @ values
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise FitSingularError(f"rank-deficient design matrix (cond ~ {cond:.3e})")
    coef = np.linalg.solve(gram, rhs_vec)
    residual = float(np.linalg.norm(design @ coef - values))
    return FertilityFit(betas=tuple(float(c) for c in coef), residual_norm=residual)
