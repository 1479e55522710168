"""Explicit time integration with stability-limited steps and run-time
blow-up monitoring.

The dissipation is nonlinear and state dependent (its coefficient is the
density itself), so a classical RK4 step under a combined transport /
dissipation CFL bound is used instead of an integrating factor.  Blow-up
detection is two-pronged: a sup-norm gradient threshold, and the energy
fraction held by the highest retained spectral band, which catches
under-resolution that a gradient monitor alone would miss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import TrajectoryRecord, make_record, sup_abs
from .models import (
    SystemState,
    VacuumError,
    advance_fields,
    evaluate_rhs,
    excess_of,
    transport_ratio,
    velocity_of,
)
from .spectral import InvalidFieldError, ParameterError, RealField, derivative

__all__ = [
    "StepperConfig",
    "RunResult",
    "compute_dt",
    "step_rk4",
    "spectral_tail_fraction",
    "run",
]


@dataclass(frozen=True)
class StepperConfig:
    t_end: float
    cfl_transport: float = 0.4
    cfl_dissipation: float = 0.4
    max_steps: int = 1_000_000
    record_every: int = 10
    blowup_gradient_threshold: float = 1e4
    tail_fraction_threshold: float = 1e-4
    snapshot_times: tuple[float, ...] = ()
    store_fields: bool = False

    def __post_init__(self):
        if not (0.0 < self.cfl_transport <= 1.0):
            raise ParameterError("cfl_transport must lie in (0, 1]")
        if not (0.0 < self.cfl_dissipation <= 1.0):
            raise ParameterError("cfl_dissipation must lie in (0, 1]")
        if self.t_end <= 0.0 or not np.isfinite(self.t_end):
            raise ParameterError("t_end must be a positive real")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be a positive integer")
        if self.record_every < 1:
            raise ParameterError("record_every must be a positive integer")
        if self.blowup_gradient_threshold <= 0.0:
            raise ParameterError("blowup_gradient_threshold must be positive")
        if not (0.0 < self.tail_fraction_threshold < 1.0):
            raise ParameterError("tail_fraction_threshold must lie in (0, 1)")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))


@dataclass(frozen=True)
class RunResult:
    """Trajectory summary: final state, diagnostic records, termination
    reason, the accumulated regularity integral, Lipschitz data measured at
    t = 0 for the transport checks, and any captured field snapshots."""

    final_state: SystemState
    records: tuple[TrajectoryRecord, ...]
    termination: str
    bkm_integral: float
    w0_sup: float
    f0_sup: float
    snapshots: tuple[tuple[float, SystemState], ...] = ()
    states: tuple[SystemState, ...] = ()


def _primary_field(state: SystemState) -> RealField:
    """The field whose gradient controls regularity: rho for the alignment
    models, u for the Burgers comparison model."""
    return state.u if state.formulation == "burgers" else state.rho


def compute_dt(state: SystemState, config: StepperConfig) -> float:
    """Stability-limited step: transport CFL against max |u| and an explicit
    dissipative bound against the largest retained symbol value."""
    grid = state.params.grid
    u = velocity_of(state)
    umax = max(float(np.max(np.abs(u.values))), 1e-12)
    dt = config.cfl_transport * grid.spacing / umax
    if state.formulation == "burgers":
        coeff = state.params.epsilon_burgers
    else:
        coeff = float(np.max(state.rho.values))
    if coeff > 0.0:
        dt = min(dt, config.cfl_dissipation / (coeff * grid.k_cut ** state.params.alpha))
    return dt


def step_rk4(state: SystemState, dt: float) -> SystemState:
    """Classical four-stage explicit update of the formulation's tendencies."""
    if dt <= 0.0 or not np.isfinite(dt):
        raise ParameterError("dt must be a positive real")
    t = state.time
    y0 = [getattr(state, name).values for name in state.evolved_fields()]

    k1 = [f.values for f in evaluate_rhs(state)]
    s2 = advance_fields(state, [y + 0.5 * dt * k for y, k in zip(y0, k1)], t + 0.5 * dt)
    k2 = [f.values for f in evaluate_rhs(s2)]
    s3 = advance_fields(state, [y + 0.5 * dt * k for y, k in zip(y0, k2)], t + 0.5 * dt)
    k3 = [f.values for f in evaluate_rhs(s3)]
    s4 = advance_fields(state, [y + dt * k for y, k in zip(y0, k3)], t + dt)
    k4 = [f.values for f in evaluate_rhs(s4)]

    new = [
        y + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for y, a, b, c, d in zip(y0, k1, k2, k3, k4)
    ]
    return advance_fields(state, new, t + dt)


def spectral_tail_fraction(field: RealField) -> float:
    """Energy fraction in the top third of the retained spectral band."""
    grid = field.grid
    c = np.fft.fft(field.values) / grid.n
    m = np.abs(grid.modes)
    keep = m <= grid.cutoff_mode
    band = keep & (m > (2.0 / 3.0) * grid.cutoff_mode)
    total = float(np.sum(np.abs(c[keep & (m > 0)]) ** 2))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.abs(c[band]) ** 2)) / total


def _grad_sup(state: SystemState) -> float:
    return sup_abs(derivative(_primary_field(state)))


def _initial_lipschitz_data(state: SystemState) -> tuple[float, float]:
    """(w0_sup, f0_sup): sup |d(g/rho)/dx / rho| and sup |g/rho| at t = 0."""
    if state.formulation in ("burgers", "special"):
        return 0.0, 0.0
    rho = state.rho
    ratio = transport_ratio(rho, excess_of(state))
    f0 = sup_abs(ratio)
    w0 = sup_abs(RealField(rho.grid, derivative(ratio).values / rho.values))
    return w0, f0


def run(initial: SystemState, config: StepperConfig) -> RunResult:
    """Integrate to ``t_end`` or earlier termination, recording diagnostics.

    The regularity integral accumulates ``sup |d(field)/dx|**2`` by the
    trapezoid rule on the step times.  Termination is one of
    ``reached_t_end``, ``blowup_detected``, ``vacuum``, or ``step_limit``
    and is deterministic for fixed inputs.
    """
    state = initial
    w0_sup, f0_sup = _initial_lipschitz_data(initial)
    bkm = 0.0
    records = [make_record(state, bkm)]
    states = [state] if config.store_fields else []
    snapshots: list[tuple[float, SystemState]] = []
    pending = sorted(config.snapshot_times)
    grad = _grad_sup(state)
    integrand = grad * grad
    termination = None
    steps = 0
    recorded_last = True

    eps_t = 1e-12 * (1.0 + config.t_end)
    while state.time < config.t_end - eps_t:
        if steps >= config.max_steps:
            termination = "step_limit"
            break
        dt = min(compute_dt(state, config), config.t_end - state.time)
        try:
            state = step_rk4(state, dt)
            grad = _grad_sup(state)
        except VacuumError:
            termination = "vacuum"
            recorded_last = False
            break
        except InvalidFieldError:
            termination = "blowup_detected"
            recorded_last = False
            break
        steps += 1
        new_integrand = grad * grad
        bkm += 0.5 * (integrand + new_integrand) * dt
        integrand = new_integrand

        while pending and state.time >= pending[0] - eps_t:
            snapshots.append((pending.pop(0), state))

        recorded_last = False
        if steps % config.record_every == 0:
            records.append(make_record(state, bkm))
            if config.store_fields:
                states.append(state)
            recorded_last = True

        if grad > config.blowup_gradient_threshold or (
            spectral_tail_fraction(_primary_field(state)) > config.tail_fraction_threshold
        ):
            termination = "blowup_detected"
            break

    if termination is None:
        termination = "reached_t_end" if state.time >= config.t_end - eps_t else "step_limit"
    if not recorded_last:
        records.append(make_record(state, bkm))
        if config.store_fields:
            states.append(state)

    return RunResult(
        final_state=state,
        records=tuple(records),
        termination=termination,
        bkm_integral=bkm,
        w0_sup=w0_sup,
        f0_sup=f0_sup,
        snapshots=tuple(snapshots),
        states=tuple(states),
    )
