"""Exact moment reduction of the age-structured model to an ODE system.

The state is (p, p_1, ..., p_n): total population plus the n weighted age
moments of the density against a**(i-1) * exp(-rho*a). The birth rate is an
algebraic readout of the state, and the system closes exactly because the
fertility age profile is a polynomial times exp(-rho*a).

Two steppers are provided: classical fixed-step RK4 and an adaptive embedded
Dormand-Prince 5(4) pair. Both integrate an extra channel for the running
integral of the crowding mortality psi(p), which the density reconstruction
needs, and both expose cubic-Hermite dense output between accepted steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    NegativityError,
    ParameterError,
    StepSizeError,
    TrajectoryRangeError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .model import FeedbackSpec, ModelParams

NEGATIVE_SLACK = 1e-9


@dataclass(frozen=True)
class StateVector:
    """Population total plus weighted age moments; entries are nonnegative.

    Values in [-1e-9, 0) are clamped to zero on construction; anything more
    negative is rejected.
    """

    p: float
    moments: tuple[float, ...]

    def __post_init__(self):
        vals = [float(self.p), *(float(m) for m in self.moments)]
        for v in vals:
            if not math.isfinite(v):
                raise ParameterError("state entries must be finite")
            if v < -NEGATIVE_SLACK:
                raise ParameterError(f"state entry {v!r} below the negativity slack")
        clamped = [0.0 if v < 0 else v for v in vals]
        object.__setattr__(self, "p", clamped[0])
        object.__setattr__(self, "moments", tuple(clamped[1:]))

    @property
    def n(self) -> int:
        return len(self.moments)

    def as_array(self) -> np.ndarray:
        return np.array([self.p, *self.moments], dtype=float)

    @classmethod
    def from_array(cls, y) -> "StateVector":
        y = np.asarray(y, dtype=float)
        return cls(p=float(y[0]), moments=tuple(float(v) for v in y[1:]))


def _rhs_array(y: np.ndarray, params, feedback) -> np.ndarray:
    p = y[0]
    mom = y[1:]
    phi = feedback.phi(p)
    psi = feedback.psi(p)
    betas = params.betas
    births = params.r0 * phi * float(np.dot(betas, mom))
    out = np.empty_like(y)
    out[0] = -(params.mu0 + psi) * p + births
    late = params.r0 * phi * float(np.dot(betas[1:], mom[1:])) if params.n > 1 else 0.0
    out[1] = (params.r0 * betas[0] * phi - params.rho - params.mu0 - psi) * mom[0] + late
    if params.n > 1:
        decay = params.rho + params.mu0 + psi
        out[2:] = np.arange(1, params.n) * mom[:-1] - decay * mom[1:]
    return out


def rhs(state: StateVector, params: ModelParams, feedback: FeedbackSpec) -> StateVector:
    """Time derivative of the moment system at a state.

    The first component is the balance law p' = births - (mu0 + psi(p)) * p.
    """
    y = state.as_array()
    if not np.all(np.isfinite(y)):
        raise ParameterError("rhs requires finite state entries")
    if len(state.moments) != params.n:
        raise ParameterError(f"state carries {len(state.moments)} moments, expected {params.n}")
    d = _rhs_array(y, params, feedback)
    out = object.__new__(StateVector)  # derivatives may be negative; skip clamping
    object.__setattr__(out, "p", float(d[0]))
    object.__setattr__(out, "moments", tuple(float(v) for v in d[1:]))
    return out


def birth_rate(state: StateVector, params: ModelParams, feedback: FeedbackSpec) -> float:
    """Birth rate r0 * phi(p) * sum_i beta_i * p_{i+1} at a state; nonnegative."""
    if len(state.moments) != params.n:
        raise ParameterError(f"state carries {len(state.moments)} moments, expected {params.n}")
    return float(params.r0 * feedback.phi(state.p) * np.dot(params.betas, state.moments))


def _births_rows(states: np.ndarray, params, feedback) -> np.ndarray:
    # states: (m, n+1) rows of [p, moments...]
    phi = np.asarray(feedback.phi(states[:, 0]), dtype=float)
    return params.r0 * phi * (states[:, 1:] @ np.asarray(params.betas))


# ---------------------------------------------------------------------------
# trajectory container with dense output


def _hermite_eval(t_arr: np.ndarray, kt: np.ndarray, ky: np.ndarray, kf: np.ndarray) -> np.ndarray:
    """Cubic-Hermite interpolation between integrator knots (value + derivative)."""
    idx = np.clip(np.searchsorted(kt, t_arr, side="right") - 1, 0, kt.size - 2)
    h = kt[idx + 1] - kt[idx]
    s = np.clip((t_arr - kt[idx]) / h, 0.0, 1.0)
    s2 = s * s
    s3 = s2 * s
    h00 = (2 * s3 - 3 * s2 + 1)[:, None]
    h10 = (s3 - 2 * s2 + s)[:, None]
    h01 = (-2 * s3 + 3 * s2)[:, None]
    h11 = (s3 - s2)[:, None]
    hh = h[:, None]
    return h00 * ky[idx] + h10 * hh * kf[idx] + h01 * ky[idx + 1] + h11 * hh * kf[idx + 1]


@dataclass
class Trajectory:
    """Sampled solution of the moment system plus dense-output knots.

    times/states/birth_rates/psi_integral are the user-facing samples;
    the knot arrays hold every accepted integrator step (state augmented
    with the psi integral) and its derivative for cubic-Hermite evaluation
    at arbitrary times in [0, t_end].
    """

    times: np.ndarray
    states: np.ndarray
    birth_rates: np.ndarray
    psi_integral: np.ndarray
    params: "ModelParams"
    feedback: "FeedbackSpec"
    knot_times: np.ndarray = field(repr=False, default=None)
    knot_states: np.ndarray = field(repr=False, default=None)
    knot_derivs: np.ndarray = field(repr=False, default=None)
    clamp_count: int = 0

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("trajectory sample times must be strictly increasing")
        if self.times[0] == 0.0 and self.psi_integral[0] != 0.0:
            raise ParameterError("psi integral must start at zero")
        if np.any(np.diff(self.psi_integral) < -NEGATIVE_SLACK):
            raise ParameterError("psi integral must be nondecreasing")

    @property
    def t_end(self) -> float:
        return float(self.knot_times[-1])

    def _check_range(self, t: np.ndarray):
        slack = 1e-12 * max(1.0, self.t_end)
        if np.any(t < -slack) or np.any(t > self.t_end + slack):
            raise TrajectoryRangeError(f"query time outside [0, {self.t_end!r}]")

    def _eval_aug(self, t) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        self._check_range(t_arr)
        return _hermite_eval(t_arr, self.knot_times, self.knot_states, self.knot_derivs)

    def state_at(self, t) -> np.ndarray:
        """State rows [p, moments...] at time(s) t, clamped to nonnegative."""
        out = np.maximum(self._eval_aug(t)[:, :-1], 0.0)
        return out[0] if np.ndim(t) == 0 else out

    def psi_integral_at(self, t):
        """Running integral of psi(p) over [0, t]."""
        out = np.maximum(self._eval_aug(t)[:, -1], 0.0)
        return float(out[0]) if np.ndim(t) == 0 else out

    def birth_rate_at(self, t):
        """Birth rate evaluated from the dense-output state at time(s) t."""
        states = np.atleast_2d(self.state_at(t))
        b = _births_rows(states, self.params, self.feedback)
        return float(b[0]) if np.ndim(t) == 0 else b


# ---------------------------------------------------------------------------
# steppers

# Dormand-Prince 5(4) tableau; the 5th-order weights are propagated and the
# last stage is the derivative at the new point (first-same-as-last).
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_ERR = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


class _NegativityGuard:
    """Applies the undershoot policy: clamp tiny negatives, reject large ones."""

    def __init__(self, n_state: int):
        self.n_state = n_state  # components subject to the policy
        self.count = 0

    def apply(self, y: np.ndarray, t: float) -> np.ndarray:
        head = y[: self.n_state]
        worst = head.min() if head.size else 0.0
        if worst < -NEGATIVE_SLACK:
            raise NegativityError(
                f"state entry {worst!r} at t={t!r} fell below the -1e-9 slack"
            )
        if worst < 0.0:
            mask = head < 0.0
            self.count += int(np.count_nonzero(mask))
            head[mask] = 0.0
        return y


def _integrate_rk4(f, y0, t_end, h, guard):
    ts = [0.0]
    ys = [y0.copy()]
    fs = [f(0.0, y0)]
    t = 0.0
    y = y0.copy()
    k1 = fs[0]
    while t < t_end - 1e-15 * t_end:
        step = min(h, t_end - t)
        k2 = f(t + 0.5 * step, y + 0.5 * step * k1)
        k3 = f(t + 0.5 * step, y + 0.5 * step * k2)
        k4 = f(t + step, y + step * k3)
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + step
        if abs(t - t_end) < 1e-12 * max(1.0, t_end):
            t = t_end
        y = guard.apply(y, t)
        k1 = f(t, y)
        ts.append(t)
        ys.append(y.copy())
        fs.append(k1)
    return np.array(ts), np.array(ys), np.array(fs)


def _integrate_dp45(f, y0, t_end, rtol, atol, max_step, guard):
    ts = [0.0]
    ys = [y0.copy()]
    k1 = f(0.0, y0)
    fs = [k1]
    t = 0.0
    y = y0.copy()
    h = min(max_step, t_end / 100.0)
    k = np.empty((7, y0.size))
    while t < t_end:
        h = min(h, t_end - t, max_step)
        if h < 1e-14 * max(t_end, 1.0):
            raise StepSizeError(f"step size underflow at t={t!r}; problem too stiff")
        k[0] = k1
        for i in range(1, 7):
            yi = y + h * (np.asarray(_DP_A[i]) @ k[:i])
            k[i] = f(t + _DP_C[i] * h, yi)
        y_new = y + h * (np.asarray(_DP_B5[:6]) @ k[:6])
        # stage 7 is f at the candidate point; reused as k1 when accepted
        k[6] = f(t + h, y_new)
        err_vec = h * (np.asarray(_DP_ERR) @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            h *= 0.2
            continue
        if err <= 1.0:
            t_new = t + h
            if t_end - t_new < 1e-14 * max(t_end, 1.0):
                t_new = t_end
            y = guard.apply(y_new, t_new)
            t = t_new
            k1 = k[6]
            ts.append(t)
            ys.append(y.copy())
            fs.append(k1.copy())
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= factor
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return np.array(ts), np.array(ys), np.array(fs)


def integrate(
    initial: StateVector,
    params: ModelParams,
    feedback: FeedbackSpec,
    t_end: float,
    *,
    method: str = "rk45",
    h: float | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_step: float | None = None,
    sample_times=None,
    n_samples: int = 1001,
) -> Trajectory:
    """Integrate the moment system over [0, t_end] and sample the solution.

    method 'rk4' takes fixed steps of h (the last step is shortened to land
    on t_end); 'rk45' is adaptive with the given rtol/atol. Samples default
    to n_samples equispaced times and are evaluated from the dense output.
    States are kept nonnegative per the undershoot policy; the number of
    clamped entries is reported on the trajectory.
    """
    if not (t_end > 0):
        raise ParameterError("t_end must be > 0")
    if len(initial.moments) != params.n:
        raise ParameterError(f"initial state carries {len(initial.moments)} moments, expected {params.n}")
    if sample_times is None:
        if n_samples < 2:
            raise ParameterError("need at least two sample times")
        sample_times = np.linspace(0.0, t_end, n_samples)
    else:
        sample_times = np.asarray(sample_times, dtype=float)
        if sample_times.ndim != 1 or sample_times.size < 1:
            raise ParameterError("sample_times must be a 1-d array")
        if np.any(sample_times < 0) or np.any(sample_times > t_end * (1 + 1e-12)):
            raise ParameterError("sample times must lie in [0, t_end]")
        if np.any(np.diff(sample_times) <= 0):
            raise ParameterError("sample times must be strictly increasing")

    y0 = np.append(initial.as_array(), 0.0)  # extra channel: integral of psi(p)
    n_state = params.n + 1

    def f(t, y):
        out = np.empty_like(y)
        out[:n_state] = _rhs_array(y[:n_state], params, feedback)
        out[n_state] = feedback.psi(y[0])
        return out

    guard = _NegativityGuard(n_state)
    if method == "rk4":
        if h is None or not (h > 0):
            raise ParameterError("rk4 requires a positive step size h")
        kt, ky, kf = _integrate_rk4(f, y0, float(t_end), float(h), guard)
    elif method == "rk45":
        if max_step is None:
            max_step = t_end / 20.0
        if not (max_step > 0):
            raise ParameterError("max_step must be > 0")
        kt, ky, kf = _integrate_dp45(f, y0, float(t_end), float(rtol), float(atol), float(max_step), guard)
    else:
        raise ParameterError(f"unknown integration method {method!r}")

    aug = _hermite_eval(sample_times, kt, ky, kf)
    head = aug[:, :n_state]
    worst = float(head.min())
    if worst < -NEGATIVE_SLACK:
        raise NegativityError(f"sampled state entry {worst!r} fell below the -1e-9 slack")
    clamped_samples = int(np.count_nonzero(head < 0.0))
    head = np.maximum(head, 0.0)
    zint = np.maximum.accumulate(np.maximum(aug[:, n_state], 0.0))  # guard float-level dips
    total_clamped = guard.count + clamped_samples
    if total_clamped:
        warnings.warn(
            f"integration clamped {total_clamped} slightly negative state entries",
            stacklevel=2,
        )
    return Trajectory(
        times=sample_times,
        states=head,
        birth_rates=_births_rows(head, params, feedback),
        psi_integral=zint,
        params=params,
        feedback=feedback,
        knot_times=kt,
        knot_states=ky,
        knot_derivs=kf,
        clamp_count=total_clamped,
    )
