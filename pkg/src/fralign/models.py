"""Model states and right-hand sides for the nonlocal alignment system.

Three equivalent formulations of the alignment dynamics are supported, plus
the fractional Burgers equation as a comparison model:

* ``primitive``     -- density and velocity (rho, u); the alignment force is
  written as ``u * Lam rho - Lam(rho u)`` with ``Lam`` the fractional
  dissipation operator, which is exact for the periodized kernel.
* ``reformulated``  -- density and the gradient excess ``g = du/dx - Lam rho``,
  both transported in flux form; the velocity is recovered from the
  constraint together with the conserved momentum.
* ``special``       -- the constrained case ``g == 0``: a single continuity
  equation for the density with ``du/dx = Lam rho``.
* ``burgers``       -- ``u_t + u u_x = -eps * Lam u``; no density.

States are immutable; every quadratic product is dealiased with the
two-thirds rule, so mass stays exact and momentum drifts only at the time
integrator's order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .spectral import (
    ParameterError,
    RealField,
    SpectralGrid,
    dealias,
    dealias_field,
    derivative,
    eval_at,
    forward_transform,
    fractional_laplacian,
    integrate,
    inverse_transform,
    mean_zero_primitive,
    refine,
    require_same_grid,
)

__all__ = [
    "VacuumError",
    "ModelParams",
    "SystemState",
    "DerivedFields",
    "FORMULATIONS",
    "ALIGNMENT_FORMULATIONS",
    "VACUUM_RATIO",
    "primitive_state",
    "reformulated_state",
    "special_state",
    "burgers_state",
    "gradient_excess",
    "transport_ratio",
    "reconstruct_velocity",
    "derived_fields",
    "velocity_of",
    "multiply_dealiased",
    "rhs_primitive",
    "rhs_reformulated",
    "rhs_special",
    "rhs_burgers",
    "evaluate_rhs",
    "make_special_data",
    "rescale_state",
    "constant_field",
    "single_mode_field",
    "steep_front_field",
    "random_smooth_field",
]

FORMULATIONS = ("primitive", "reformulated", "special", "burgers")
ALIGNMENT_FORMULATIONS = ("primitive", "reformulated", "special")

# density this far below its mean counts as numerical vacuum: the continuum
# theory forbids vacuum in finite time, so hitting it means resolution failure
VACUUM_RATIO = 1e-8


class VacuumError(RuntimeError):
    """Density lost positivity (or came numerically close to it)."""


@dataclass(frozen=True)
class ModelParams:
    """Dissipation order, grid, and the Burgers comparison coefficient."""

    alpha: float
    grid: SpectralGrid
    epsilon_burgers: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha!r}")
        if self.epsilon_burgers < 0.0 or not np.isfinite(self.epsilon_burgers):
            raise ParameterError("epsilon_burgers must be a finite nonnegative real")


_REQUIRED_FIELDS = {
    "primitive": ("rho", "u"),
    "reformulated": ("rho", "g"),
    "special": ("rho",),
    "burgers": ("u",),
}


@dataclass(frozen=True)
class SystemState:
    """Immutable snapshot of one model formulation.

    ``momentum0`` is the conserved momentum fixed at construction; the
    reformulated velocity reconstruction uses it directly instead of
    re-measuring the (drifting) discrete integral.  ``u_mean`` is only
    meaningful for the special model.
    """

    params: ModelParams
    formulation: str
    rho: RealField | None = None
    u: RealField | None = None
    g: RealField | None = None
    momentum0: float = 0.0
    u_mean: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ParameterError(f"unknown formulation {self.formulation!r}")
        for name in _REQUIRED_FIELDS[self.formulation]:
            field = getattr(self, name)
            if field is None:
                raise ParameterError(f"{self.formulation} state requires field {name!r}")
            if field.grid != self.params.grid:
                raise ParameterError(f"field {name!r} does not live on the model grid")
        if not np.isfinite(self.momentum0):
            raise ParameterError("momentum0 must be finite")
        if self.time < 0.0 or not np.isfinite(self.time):
            raise ParameterError("time must be a finite nonnegative real")

    def evolved_fields(self) -> tuple[str, ...]:
        return _REQUIRED_FIELDS[self.formulation]


def _require_alignment_alpha(params: ModelParams):
    # the global-regularity theory covers dissipation orders in (0, 1); the
    # Burgers comparison model is the only place the wider range is allowed
    if not (0.0 < params.alpha < 1.0):
        raise ParameterError(
            f"alignment models require alpha in (0, 1), got {params.alpha!r}"
        )


def _check_positive(rho: RealField, what: str = "density"):
    if float(np.min(rho.values)) <= 0.0:
        raise VacuumError(f"{what} must be strictly positive at construction")


def _check_mean_zero(g: RealField, tol: float = 1e-10):
    if abs(g.mean()) > tol * (1.0 + g.max_abs()):
        raise ParameterError(
            f"gradient-excess field must have mean zero, got mean {g.mean():.3e}"
        )


def primitive_state(
    params: ModelParams, rho: RealField, u: RealField, time: float = 0.0
) -> SystemState:
    """Strong-form state (rho, u); the conserved momentum is measured here."""
    _require_alignment_alpha(params)
    rho = dealias_field(rho)
    u = dealias_field(u)
    _check_positive(rho)
    p0 = integrate(RealField(params.grid, rho.values * u.values))
    return SystemState(params, "primitive", rho=rho, u=u, momentum0=p0, time=time)


def reformulated_state(
    params: ModelParams,
    rho: RealField,
    g: RealField,
    momentum0: float,
    time: float = 0.0,
) -> SystemState:
    _require_alignment_alpha(params)
    rho = dealias_field(rho)
    g = dealias_field(g)
    _check_positive(rho)
    _check_mean_zero(g)
    return SystemState(params, "reformulated", rho=rho, g=g, momentum0=momentum0, time=time)


def special_state(
    params: ModelParams, rho: RealField, u_mean: float = 0.0, time: float = 0.0
) -> SystemState:
    """Constrained model with zero gradient excess; only rho evolves."""
    _require_alignment_alpha(params)
    rho = dealias_field(rho)
    kappa = rho.mean()
    if kappa <= 0.0:
        raise ParameterError(f"mean density must be positive, got {kappa:.3e}")
    # u = Lam(phi) + u_mean is orthogonal to rho up to the constant part
    p0 = u_mean * kappa * params.grid.length
    return SystemState(
        params, "special", rho=rho, momentum0=p0, u_mean=u_mean, time=time
    )


def burgers_state(params: ModelParams, u: RealField, time: float = 0.0) -> SystemState:
    """Fractional Burgers comparison state; momentum0 stores the conserved mean."""
    u = dealias_field(u)
    return SystemState(params, "burgers", u=u, momentum0=integrate(u), time=time)


def _vacuum_guard(rho: RealField):
    kappa = rho.mean()
    if float(np.min(rho.values)) <= VACUUM_RATIO * max(kappa, 0.0) or kappa <= 0.0:
        raise VacuumError(
            f"density minimum {np.min(rho.values):.3e} at or below vacuum threshold"
        )


def multiply_dealiased(a: RealField, b: RealField) -> RealField:
    """Pointwise product followed by two-thirds truncation."""
    grid = require_same_grid(a, b)
    return dealias_field(RealField(grid, a.values * b.values))


def gradient_excess(rho: RealField, u: RealField, alpha: float) -> RealField:
    """du/dx - Lam rho; mean zero by construction."""
    require_same_grid(rho, u)
    return RealField(
        rho.grid, derivative(u).values - fractional_laplacian(rho, alpha).values
    )


def transport_ratio(rho: RealField, g: RealField) -> RealField:
    """The ratio g / rho, which is transported by the flow."""
    require_same_grid(rho, g)
    if float(np.min(rho.values)) <= 0.0:
        raise VacuumError("cannot form g / rho: density is not strictly positive")
    return RealField(rho.grid, g.values / rho.values)


@dataclass(frozen=True)
class DerivedFields:
    """Auxiliary fields derived from (rho, g): the mean-zero density
    fluctuation, the two mean-zero primitives, the transported ratio, the
    mean density, and the constant velocity offset fixed by momentum."""

    fluctuation: RealField       # rho - kappa
    fluct_primitive: RealField   # mean-zero antiderivative of the fluctuation
    excess_primitive: RealField  # mean-zero antiderivative of g
    ratio: RealField             # g / rho
    mean_density: float
    velocity_offset: float


def derived_fields(
    rho: RealField, g: RealField, momentum0: float, alpha: float
) -> DerivedFields:
    grid = require_same_grid(rho, g)
    kappa = rho.mean()
    if kappa <= 0.0:
        raise ParameterError("mean density must be positive")
    theta = RealField(grid, rho.values - kappa)
    phi = mean_zero_primitive(theta)
    psi = mean_zero_primitive(g)
    ratio = transport_ratio(rho, g)
    offset = (momentum0 - integrate(RealField(grid, rho.values * psi.values))) / (
        kappa * grid.length
    )
    return DerivedFields(theta, phi, psi, ratio, kappa, offset)


def reconstruct_velocity(
    rho: RealField, g: RealField, momentum0: float, alpha: float
) -> RealField:
    """Velocity satisfying du/dx = Lam rho + g and the momentum constraint.

    u = Lam(phi) + psi + I0 with phi, psi the mean-zero primitives of the
    density fluctuation and of g; the constant I0 is fixed by the conserved
    momentum, using that Lam(phi) is orthogonal to rho.
    """
    if float(np.min(rho.values)) <= 0.0:
        raise VacuumError("velocity reconstruction requires strictly positive density")
    _check_mean_zero(g)
    d = derived_fields(rho, g, momentum0, alpha)
    u_vals = (
        fractional_laplacian(d.fluct_primitive, alpha).values
        + d.excess_primitive.values
        + d.velocity_offset
    )
    return RealField(rho.grid, u_vals)


def velocity_of(state: SystemState) -> RealField:
    """The velocity field implied by a state, whatever its formulation."""
    if state.formulation in ("primitive", "burgers"):
        return state.u
    if state.formulation == "reformulated":
        return reconstruct_velocity(
            state.rho, state.g, state.momentum0, state.params.alpha
        )
    # special: g == 0, so u = Lam(phi) + u_mean
    kappa = state.rho.mean()
    theta = RealField(state.params.grid, state.rho.values - kappa)
    u_vals = (
        fractional_laplacian(mean_zero_primitive(theta), state.params.alpha).values
        + state.u_mean
    )
    return RealField(state.params.grid, u_vals)


def excess_of(state: SystemState) -> RealField:
    """The gradient-excess field implied by a state (zero for special/burgers)."""
    if state.formulation == "reformulated":
        return state.g
    if state.formulation == "primitive":
        return gradient_excess(state.rho, state.u, state.params.alpha)
    grid = state.params.grid
    return RealField(grid, np.zeros(grid.n))


def rhs_primitive(state: SystemState) -> tuple[RealField, RealField]:
    """Tendencies (d rho, d u) of the strong form.

    The nonlocal force is u * Lam rho - Lam(rho u), the exact periodized
    alignment integral for the singular kernel.
    """
    rho, u = state.rho, state.u
    _vacuum_guard(rho)
    alpha = state.params.alpha
    flux = multiply_dealiased(rho, u)
    d_rho = RealField(rho.grid, -derivative(flux).values)
    lam_rho = fractional_laplacian(rho, alpha)
    d_u = RealField(
        rho.grid,
        -multiply_dealiased(u, derivative(u)).values
        + multiply_dealiased(u, lam_rho).values
        - fractional_laplacian(flux, alpha).values,
    )
    return d_rho, d_u


def rhs_reformulated(state: SystemState) -> tuple[RealField, RealField]:
    """Tendencies (d rho, d g): both fields ride the same continuity equation."""
    rho, g = state.rho, state.g
    _vacuum_guard(rho)
    u = reconstruct_velocity(rho, g, state.momentum0, state.params.alpha)
    d_rho = RealField(rho.grid, -derivative(multiply_dealiased(rho, u)).values)
    d_g = RealField(rho.grid, -derivative(multiply_dealiased(g, u)).values)
    return d_rho, d_g


def rhs_special(rho: RealField, alpha: float, u_mean: float = 0.0) -> RealField:
    """Tendency of the single-equation constrained model."""
    _vacuum_guard(rho)
    kappa = rho.mean()
    theta = RealField(rho.grid, rho.values - kappa)
    u = RealField(
        rho.grid,
        fractional_laplacian(mean_zero_primitive(theta), alpha).values + u_mean,
    )
    return RealField(rho.grid, -derivative(multiply_dealiased(rho, u)).values)


def rhs_burgers(u: RealField, alpha: float, epsilon: float) -> RealField:
    """Tendency -u u_x - eps * Lam u of the fractional Burgers equation."""
    if epsilon < 0.0:
        raise ParameterError("epsilon must be nonnegative")
    vals = -multiply_dealiased(u, derivative(u)).values
    if epsilon > 0.0:
        vals = vals - epsilon * fractional_laplacian(u, alpha).values
    return RealField(u.grid, vals)


def evaluate_rhs(state: SystemState) -> tuple[RealField, ...]:
    """Tendencies of the evolved fields, in ``state.evolved_fields()`` order."""
    if state.formulation == "primitive":
        return rhs_primitive(state)
    if state.formulation == "reformulated":
        return rhs_reformulated(state)
    if state.formulation == "special":
        return (rhs_special(state.rho, state.params.alpha, state.u_mean),)
    return (rhs_burgers(state.u, state.params.alpha, state.params.epsilon_burgers),)


def advance_fields(state: SystemState, arrays, time: float) -> SystemState:
    """New state with the evolved fields replaced; structural checks only."""
    updates = {
        name: RealField(state.params.grid, a)
        for name, a in zip(state.evolved_fields(), arrays)
    }
    return dataclasses.replace(state, time=time, **updates)


def make_special_data(
    rho0: RealField, alpha: float, u_mean: float = 0.0
) -> SystemState:
    """Primitive state whose initial gradient excess vanishes identically.

    The velocity is built from the density so that du/dx = Lam rho exactly;
    evolving it keeps the constraint for all time.
    """
    params = ModelParams(alpha=alpha, grid=rho0.grid)
    _require_alignment_alpha(params)
    rho0 = dealias_field(rho0)
    _check_positive(rho0)
    kappa = rho0.mean()
    theta = RealField(rho0.grid, rho0.values - kappa)
    u0 = RealField(
        rho0.grid,
        fractional_laplacian(mean_zero_primitive(theta), alpha).values + u_mean,
    )
    return primitive_state(params, rho0, u0)


def _embed_modes(field: RealField, fine_grid: SpectralGrid) -> np.ndarray:
    """Values of ``x -> field(x / q)`` on a grid with q-fold period."""
    coarse = field.grid
    c = np.fft.fft(field.values) / coarse.n
    cf = np.zeros(fine_grid.n, dtype=np.complex128)
    half = coarse.n // 2
    cf[:half] = c[:half]
    cf[fine_grid.n - half + 1:] = c[half + 1:]
    cf[half] = 0.5 * c[half]
    cf[fine_grid.n - half] = 0.5 * c[half]
    return np.real(np.fft.ifft(cf)) * fine_grid.n


def rescale_state(state: SystemState, factor: float) -> SystemState:
    """Space-time self-similar rescaling by ``factor`` (lambda).

    The rescaled snapshot satisfies rho'(x) = rho(factor * x) on a torus of
    period L / factor, with g scaled by factor**alpha, u by
    factor**(alpha - 1), and the time coordinate by factor**(-alpha).
    Only reciprocals of positive integers are representable on a uniform
    grid of the same point density.
    """
    if not np.isfinite(factor) or factor <= 0.0:
        raise ParameterError("scaling factor must be positive")
    inv = 1.0 / factor
    q = int(round(inv))
    if q < 1 or abs(inv - q) > 1e-9 * inv:
        raise ParameterError(
            f"scaling factor must be the reciprocal of a positive integer, got {factor!r}"
        )
    if q == 1:
        return state
    alpha = state.params.alpha
    grid = state.params.grid
    fine = SpectralGrid(q * grid.n, q * grid.length)
    new_params = dataclasses.replace(state.params, grid=fine)
    lam_a = factor ** alpha

    def mapped(field, gain):
        return RealField(fine, gain * _embed_modes(field, fine))

    kwargs = dict(
        params=new_params,
        formulation=state.formulation,
        time=state.time / lam_a,
        momentum0=factor ** (alpha - 2.0) * state.momentum0,
        u_mean=factor ** (alpha - 1.0) * state.u_mean,
    )
    if state.rho is not None:
        kwargs["rho"] = mapped(state.rho, 1.0)
    if state.u is not None:
        kwargs["u"] = mapped(state.u, factor ** (alpha - 1.0))
    if state.g is not None:
        kwargs["g"] = mapped(state.g, lam_a)
    return SystemState(**kwargs)


# ---------------------------------------------------------------------------
# initial-data builders


def constant_field(grid: SpectralGrid, value: float) -> RealField:
    return RealField(grid, np.full(grid.n, float(value)))


def single_mode_field(
    grid: SpectralGrid, amplitude: float, wavenumber: int = 1, mean: float = 0.0
) -> RealField:
    """mean + amplitude * cos(2 pi * wavenumber * x / L)."""
    if wavenumber < 1 or wavenumber > grid.cutoff_mode:
        raise ParameterError(
            f"wavenumber must lie in [1, {grid.cutoff_mode}], got {wavenumber!r}"
        )
    k = 2.0 * np.pi * wavenumber / grid.length
    return RealField(grid, mean + amplitude * np.cos(k * grid.nodes))


def steep_front_field(
    grid: SpectralGrid, amplitude: float, sharpness: float, mean: float = 0.0
) -> RealField:
    """Smooth periodic profile with a controllable steep front,
    mean + amplitude * tanh(sharpness * sin(2 pi x / L))."""
    if sharpness <= 0.0:
        raise ParameterError("sharpness must be positive")
    k = 2.0 * np.pi / grid.length
    vals = mean + amplitude * np.tanh(sharpness * np.sin(k * grid.nodes))
    return dealias_field(RealField(grid, vals))


def random_smooth_field(
    grid: SpectralGrid,
    amplitude: float,
    max_mode: int = 8,
    seed: int = 0,
    mean: float = 0.0,
) -> RealField:
    """Seeded random band-limited field normalized to the given amplitude."""
    if max_mode < 1 or max_mode > grid.cutoff_mode:
        raise ParameterError(
            f"max_mode must lie in [1, {grid.cutoff_mode}], got {max_mode!r}"
        )
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.n, dtype=complex)
    for m in range(1, max_mode + 1):
        a = (rng.normal() + 1j * rng.normal()) / np.sqrt(1.0 + m)
        c[m] = a
        c[-m] = np.conj(a)
    raw = np.real(np.fft.ifft(c)) * grid.n
    peak = np.max(np.abs(raw))
    if peak > 0:
        raw = raw * (amplitude / peak)
    return RealField(grid, mean + raw)
