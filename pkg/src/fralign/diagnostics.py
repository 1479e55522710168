"""Run-time diagnostics: conserved quantities, density bounds, transport
invariants, flocking decay, and the nonlinear-maximum-principle monitor.

Sup norms over the continuum are approximated by grid maxima on a 4x
Fourier-interpolated grid; argmax localization additionally refines the
result with a bounded scalar search on the trigonometric interpolant,
since the bound checks are sensitive to off-grid extrema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .models import (
    SystemState,
    excess_of,
    transport_ratio,
    velocity_of,
)
from .spectral import (
    RealField,
    derivative,
    eval_at,
    fractional_laplacian,
    integrate,
    mean_zero_primitive,
    refine,
    require_same_grid,
)

__all__ = [
    "REFINE_FACTOR",
    "field_max",
    "field_min",
    "sup_abs",
    "oscillation",
    "locate_max",
    "sharp_max",
    "sharp_min",
    "mass",
    "momentum",
    "flocking_amplitude",
    "TrajectoryRecord",
    "make_record",
    "BoundsReport",
    "check_density_bounds",
    "check_transport_ratio",
    "MaxPrincipleReport",
    "nonlinear_max_principle_check",
]

REFINE_FACTOR = 4


def field_max(f: RealField, factor: int = REFINE_FACTOR) -> float:
    return float(np.max(refine(f, factor).values))


def field_min(f: RealField, factor: int = REFINE_FACTOR) -> float:
    return float(np.min(refine(f, factor).values))


def sup_abs(f: RealField, factor: int = REFINE_FACTOR) -> float:
    return float(np.max(np.abs(refine(f, factor).values)))


def oscillation(f: RealField, factor: int = REFINE_FACTOR) -> float:
    fine = refine(f, factor).values
    return float(np.max(fine) - np.min(fine))


def locate_max(f: RealField, factor: int = REFINE_FACTOR) -> tuple[float, float]:
    """(position, value) of the interpolant maximum: refined grid argmax
    followed by a bounded search within one fine cell on each side."""
    fine = refine(f, factor)
    j = int(np.argmax(fine.values))
    x0 = fine.grid.nodes[j]
    h = fine.grid.spacing
    res = minimize_scalar(
        lambda x: -eval_at(f, x), bounds=(x0 - h, x0 + h), method="bounded",
        options={"xatol": 1e-12},
    )
    x_best = float(res.x)
    v_best = float(eval_at(f, x_best))
    if v_best >= fine.values[j]:
        return x_best % f.grid.length, v_best
    return float(x0), float(fine.values[j])


def sharp_max(f: RealField, factor: int = REFINE_FACTOR) -> float:
    """Interpolant sup located to round-off; bound checks need this because
    a refined-grid max still wiggles by O(h^2) as the extremum moves."""
    return locate_max(f, factor)[1]


def sharp_min(f: RealField, factor: int = REFINE_FACTOR) -> float:
    return -locate_max(RealField(f.grid, -f.values), factor)[1]


def mass(rho: RealField) -> float:
    """Total mass, exact for the uniform periodic trapezoid rule."""
    return integrate(rho)


def momentum(rho: RealField, u: RealField) -> float:
    require_same_grid(rho, u)
    return integrate(RealField(rho.grid, rho.values * u.values))


def flocking_amplitude(u: RealField) -> float:
    """Velocity oscillation sup u - inf u on the refined grid."""
    return oscillation(u)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step diagnostics row.

    For the Burgers model the density columns report the velocity extrema
    and the transport-ratio columns are zero, so one schema serves every
    formulation.
    """

    time: float
    mass: float
    momentum: float
    rho_min: float
    rho_max: float
    f_min: float
    f_max: float
    max_dx_f: float
    flock_amp: float
    bkm: float
    u_l2: float

    COLUMNS = (
        "time", "mass", "momentum", "rho_min", "rho_max", "F_min", "F_max",
        "max_dx_F", "flock_amp", "bkm", "u_l2",
    )

    def row(self) -> tuple[float, ...]:
        return (
            self.time, self.mass, self.momentum, self.rho_min, self.rho_max,
            self.f_min, self.f_max, self.max_dx_f, self.flock_amp, self.bkm,
            self.u_l2,
        )


def make_record(state: SystemState, bkm: float) -> TrajectoryRecord:
    u = velocity_of(state)
    u_l2 = float(np.sqrt(integrate(RealField(u.grid, u.values ** 2))))
    amp = flocking_amplitude(u)
    if state.formulation == "burgers":
        total = integrate(u)
        return TrajectoryRecord(
            time=state.time, mass=total, momentum=total,
            rho_min=field_min(u), rho_max=field_max(u),
            f_min=0.0, f_max=0.0, max_dx_f=0.0,
            flock_amp=amp, bkm=bkm, u_l2=u_l2,
        )
    rho = state.rho
    g = excess_of(state)
    if state.formulation == "special":
        f_min = f_max = max_dx_f = 0.0
    else:
        ratio = transport_ratio(rho, g)
        f_min = sharp_min(ratio)
        f_max = sharp_max(ratio)
        max_dx_f = sup_abs(derivative(ratio))
    return TrajectoryRecord(
        time=state.time,
        mass=mass(rho),
        momentum=momentum(rho, u),
        rho_min=sharp_min(rho),
        rho_max=sharp_max(rho),
        f_min=f_min,
        f_max=f_max,
        max_dx_f=max_dx_f,
        flock_amp=amp,
        bkm=bkm,
        u_l2=u_l2,
    )


@dataclass(frozen=True)
class BoundsReport:
    """Outcome of the a priori bound checks against a trajectory.

    Produced in fragments: the density checks fill the first four fields,
    the transport checks the rest; ``merged`` combines both.  Fields that a
    check does not address stay ``None``.
    """

    upper_bound_ok: bool | None = None
    sup_rho_max: float | None = None
    lower_bound_ok: bool | None = None
    lower_bound_ratio: float | None = None
    f_transport_ok: bool | None = None
    f_extrema_drift: float | None = None
    f_lipschitz_ok: bool | None = None
    f_lipschitz_ratio: float | None = None

    def merged(self, other: "BoundsReport") -> "BoundsReport":
        def pick(a, b):
            return b if a is None else a

        return BoundsReport(
            *(pick(getattr(self, f), getattr(other, f)) for f in (
                "upper_bound_ok", "sup_rho_max", "lower_bound_ok",
                "lower_bound_ratio", "f_transport_ok", "f_extrema_drift",
                "f_lipschitz_ok", "f_lipschitz_ratio",
            ))
        )

    def all_ok(self) -> bool:
        flags = (
            self.upper_bound_ok, self.lower_bound_ok,
            self.f_transport_ok, self.f_lipschitz_ok,
        )
        return all(f for f in flags if f is not None)


def check_density_bounds(
    records,
    f0_sup: float,
    rho_min0: float,
    tol: float = 1e-3,
    growth_tol: float = 1e-4,
) -> BoundsReport:
    """Verify the time-uniform density ceiling and the vacuum floor.

    Floor: rho_min(t) must stay above (1 - tol) / (1/rho_min0 + t * f0_sup)
    at every record, where f0_sup is the initial sup of |g/rho|.  With
    f0_sup = 0 this degenerates to a plain minimum principle.

    Ceiling: the sup of rho_max over the whole run must not exceed its sup
    over the first half by more than ``growth_tol`` relative (no late
    growth; compressive data saturates toward a steady profile, so a strict
    first-half argmax would misfire on a flat asymptote).
    """
    if not records:
        raise ValueError("empty record sequence")
    if rho_min0 <= 0.0:
        raise ValueError("rho_min0 must be positive")
    times = np.array([r.time for r in records])
    mins = np.array([r.rho_min for r in records])
    maxs = np.array([r.rho_max for r in records])

    floor = 1.0 / (1.0 / rho_min0 + times * f0_sup)
    ratio = float(np.min(mins / floor))
    lower_ok = bool(ratio >= 1.0 - tol)

    sup_rho = float(np.max(maxs))
    t_end = times[-1]
    first_half = maxs[times <= 0.5 * t_end] if t_end > 0 else maxs
    upper_ok = bool(sup_rho <= float(np.max(first_half)) * (1.0 + growth_tol))
    return BoundsReport(
        upper_bound_ok=upper_ok,
        sup_rho_max=sup_rho,
        lower_bound_ok=lower_ok,
        lower_bound_ratio=ratio,
    )


def check_transport_ratio(
    records,
    w0_sup: float,
    drift_tol: float = 1e-6,
    lipschitz_tol: float = 1e-3,
) -> BoundsReport:
    """Verify that the extrema of g/rho are constants of motion and that its
    Lipschitz constant stays below ``w0_sup * rho_max(t)``, where w0_sup is
    the initial sup of |d(g/rho)/dx / rho|."""
    if not records:
        raise ValueError("empty record sequence")
    f_max0 = records[0].f_max
    f_min0 = records[0].f_min
    drift = max(
        max(abs(r.f_max - f_max0) for r in records),
        max(abs(r.f_min - f_min0) for r in records),
    )
    transport_ok = bool(drift <= drift_tol * (1.0 + abs(f_max0)))

    if w0_sup <= 0.0:
        # the ratio is constant; its gradient must stay at round-off level
        worst = max(r.max_dx_f for r in records)
        return BoundsReport(
            f_transport_ok=transport_ok,
            f_extrema_drift=float(drift),
            f_lipschitz_ok=bool(worst <= 1e-10 * (1.0 + abs(f_max0))),
            f_lipschitz_ratio=float(worst),
        )
    ratio = max(r.max_dx_f / (w0_sup * r.rho_max) for r in records)
    return BoundsReport(
        f_transport_ok=transport_ok,
        f_extrema_drift=float(drift),
        f_lipschitz_ok=bool(ratio <= 1.0 + lipschitz_tol),
        f_lipschitz_ratio=float(ratio),
    )


@dataclass(frozen=True)
class MaxPrincipleReport:
    """Dichotomy data at the density argmax.

    At the maximum of rho, either the nonlocal term is at least
    fluct**(1+alpha) / (c * phi_sup**alpha), or the fluctuation itself is at
    most c * phi_sup.  ``c_required`` is the smallest constant making one of
    the branches true; it stays bounded along a regular trajectory.
    """

    x_max: float
    rho_max: float
    fluct_at_max: float
    nonlocal_at_max: float
    phi_sup: float
    c_required: float


def nonlinear_max_principle_check(rho: RealField, alpha: float) -> MaxPrincipleReport:
    x_bar, rho_max = locate_max(rho)
    kappa = rho.mean()
    theta_bar = rho_max - kappa
    lam = fractional_laplacian(rho, alpha)
    lam_bar = float(eval_at(lam, x_bar))
    theta = RealField(rho.grid, rho.values - kappa)
    phi_sup = sup_abs(mean_zero_primitive(theta))

    if theta_bar <= 0.0 or phi_sup == 0.0:
        c = 0.0
    else:
        c_second = theta_bar / phi_sup
        if lam_bar > 0.0:
            c_first = theta_bar ** (1.0 + alpha) / (lam_bar * phi_sup ** alpha)
            c = min(c_first, c_second)
        else:
            c = c_second
    return MaxPrincipleReport(
        x_max=x_bar,
        rho_max=rho_max,
        fluct_at_max=theta_bar,
        nonlocal_at_max=lam_bar,
        phi_sup=phi_sup,
        c_required=float(c),
    )
