"""Modulus-of-continuity calculus for the regularity certification.

The modulus has a concave power branch ``xi - xi**(1+alpha/2)`` below a knee
``delta`` and a logarithmic branch ``gamma*log(xi/delta) + omega(delta)``
above it.  Three functionals of the modulus control the evolution of a
density difference at a breakthrough pair separated by ``xi``:

* ``velocity_modulus``        -- modulus of continuity inherited by the
  velocity (transport term);
* ``reaction_upper_bound``    -- upper envelope for minus the nonlocal term
  at the higher point (amplification term);
* ``dissipation_lower_bound`` -- lower bound for the dissipation gained
  from the difference of the nonlocal term between the two points.

``breakthrough_derivative_bound`` combines them; wherever it is negative a
modulus breakthrough cannot occur, and ``find_certified_modulus`` searches
the (delta, gamma) box for parameters making it negative over a wide
separation range.

All integrals are evaluated by graded composite midpoint rules with the
improper logarithmic tails added in closed form; node counts are explicit
so convergence can be demonstrated by doubling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ParameterError, RealField, kernel_constant, refine

__all__ = [
    "AccuracyError",
    "ModulusOfContinuity",
    "velocity_modulus",
    "dissipation_lower_bound",
    "reaction_upper_bound",
    "reaction_bound_parts",
    "breakthrough_derivative_bound",
    "CertifiedModulus",
    "find_certified_modulus",
    "ModulusCheck",
    "check_modulus",
    "choose_scale",
]

TAIL_FACTOR = 1e6  # improper integrals are truncated at this multiple of max(xi, delta)
LOG2_2 = 2.0 * np.log(2.0)


def _power_pair(e: float, r) -> np.ndarray:
    """(1+r)**e + (1-r)**e - 2 for r in [0, 1], stable for small r.

    The linear terms cancel symbolically; below r = 0.4 an even binomial
    series avoids the floating cancellation, beyond it the direct form is
    already well conditioned.
    """
    r = np.asarray(r, dtype=np.float64)
    rs = np.minimum(r, 0.4)
    r2 = rs * rs
    coef = 1.0
    series = np.zeros_like(rs)
    power = np.ones_like(rs)
    for j in range(1, 17):
        coef *= (e - (2 * j - 2)) * (e - (2 * j - 1)) / ((2 * j - 1) * (2 * j))
        power = power * r2
        series = series + 2.0 * coef * power
    direct = (1.0 + r) ** e + (1.0 - r) ** e - 2.0
    return np.where(r < 0.4, series, direct)


class AccuracyError(RuntimeError):
    """A quadrature produced a non-finite or structurally impossible value."""


@dataclass(frozen=True)
class ModulusOfContinuity:
    """Concave increasing modulus with a power knee at ``delta``.

    Admissibility enforced at construction:

    * ``gamma <= omega(delta) / (2 log 2)`` so that doubling a separation
      on the log branch gains at most half of ``omega``;
    * slope continuity ordering ``omega'(delta-) >= omega'(delta+)``
      (concavity across the knee, which also makes the modulus strictly
      increasing on the power branch);
    * ``gamma <= ratio_cap * alpha * omega(delta)`` so that
      ``omega(xi)/xi**alpha`` is nonincreasing beyond the knee.
    """

    delta: float
    gamma: float
    alpha: float
    ratio_cap: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.gamma <= 0.0:
            raise ParameterError(f"gamma must be positive, got {self.gamma!r}")
        knee = self.knee_value()
        if knee <= 0.0:
            raise ParameterError("delta too large: power branch not increasing")
        if self.gamma > knee / LOG2_2 * (1.0 + 1e-12):
            raise ParameterError(
                f"gamma {self.gamma!r} exceeds omega(delta)/(2 log 2) = {knee / LOG2_2!r}"
            )
        slope_left = 1.0 - (1.0 + 0.5 * self.alpha) * self.delta ** (0.5 * self.alpha)
        if slope_left < self.gamma / self.delta:
            raise ParameterError(
                "concavity across the knee requires omega'(delta-) >= gamma/delta"
            )
        if self.gamma > self.ratio_cap * self.alpha * knee * (1.0 + 1e-12):
            raise ParameterError(
                "gamma too large: omega(xi)/xi**alpha would increase past the knee"
            )

    def knee_value(self) -> float:
        """omega(delta), shared by both branches."""
        return self.delta - self.delta ** (1.0 + 0.5 * self.alpha)

    @staticmethod
    def max_gamma(delta: float, alpha: float, ratio_cap: float = 1.0) -> float:
        """Largest admissible gamma for the given knee."""
        knee = delta - delta ** (1.0 + 0.5 * alpha)
        slope_left = 1.0 - (1.0 + 0.5 * alpha) * delta ** (0.5 * alpha)
        return min(knee / LOG2_2, ratio_cap * alpha * knee, slope_left * delta)

    def value(self, xi):
        """omega(xi); accepts scalars or arrays, requires xi >= 0."""
        x = np.asarray(xi, dtype=np.float64)
        if np.any(x < 0.0):
            raise ParameterError("separation must be nonnegative")
        e = 1.0 + 0.5 * self.alpha
        low = x - x ** e
        with np.errstate(divide="ignore", invalid="ignore"):
            high = self.gamma * np.log(np.where(x > 0, x, 1.0) / self.delta) + self.knee_value()
        out = np.where(x < self.delta, low, high)
        return float(out) if np.ndim(xi) == 0 else out

    def slope(self, xi):
        """One-sided derivative omega'(xi); the right branch is used at the
        knee itself (the checker never assumes differentiability there)."""
        x = np.asarray(xi, dtype=np.float64)
        if np.any(x < 0.0):
            raise ParameterError("separation must be nonnegative")
        e = 0.5 * self.alpha
        low = 1.0 - (1.0 + e) * x ** e
        with np.errstate(divide="ignore"):
            high = self.gamma / np.where(x > 0, x, np.inf)
        out = np.where(x < self.delta, low, high)
        return float(out) if np.ndim(xi) == 0 else out

    def second_difference(self, center, offset):
        """2 omega(c) - omega(c + h) - omega(c - h) for 0 <= h <= c,
        evaluated without catastrophic cancellation.

        The direct expression loses all precision as h -> 0 (the true value
        decays like h or h**2 while the three summands stay O(omega)); here
        each branch combination is reduced analytically so every computed
        term is itself O(value).  Needed by the singular quadratures, which
        probe offsets tens of orders of magnitude below the separation.
        Offsets beyond the center are clamped to it (inert quadrature
        panels park their abscissas out of range with zero weight).
        """
        c = np.asarray(center, dtype=np.float64)
        h = np.asarray(offset, dtype=np.float64)
        c, h = np.broadcast_arrays(c, h)
        if np.any(h < 0.0):
            raise ParameterError("offset must be nonnegative")
        h = np.minimum(h, c)
        e = 1.0 + 0.5 * self.alpha
        d = self.delta
        g = self.gamma
        lo = c - h
        hi = c + h
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(c > 0, h / np.where(c > 0, c, 1.0), 0.0)

            # both arguments below the knee: the linear parts cancel exactly,
            # leaving c**e * ((1+r)**e + (1-r)**e - 2)
            val_pp = c ** e * _power_pair(e, r)

            # both arguments above the knee
            val_ll = -g * np.log1p(-r * r)

            # straddling, center at or above the knee
            safe_lo = np.maximum(lo, 1e-300)
            val_xu = (
                g * (np.log1p((c - d) / d) - np.log1p(r))
                + (h - (c - d))
                + d ** e * np.expm1(e * np.log1p((safe_lo - d) / d))
            )

            # straddling, center below the knee
            val_xl = (
                (h - (d - c))
                + c ** e
                * (np.expm1(e * np.log1p(-r)) + np.expm1(e * np.log1p((d - c) / np.where(c > 0, c, 1.0))))
                - g * (np.log1p(r) - np.log1p((d - c) / np.where(c > 0, c, 1.0)))
            )

        out = np.select(
            [hi <= d, lo >= d, c >= d],
            [val_pp, val_ll, val_xu],
            default=val_xl,
        )
        out = np.where(h == 0.0, 0.0, out)
        return float(out) if np.ndim(center) == 0 and np.ndim(offset) == 0 else out


def _as_positive_array(xi) -> np.ndarray:
    x = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if np.any(~np.isfinite(x)) or np.any(x <= 0.0):
        raise ParameterError("separations must be positive finite reals")
    return x


def _midpoints(n_nodes: int) -> tuple[np.ndarray, float]:
    if n_nodes < 8:
        raise ParameterError("n_nodes must be at least 8")
    return (np.arange(n_nodes) + 0.5) / n_nodes, 1.0 / n_nodes


def _maybe_scalar(out: np.ndarray, xi):
    return float(out[0]) if np.ndim(xi) == 0 else out


# Panel maps for the composite midpoint rule.  Every functional is a sum of
# integrals whose integrands are smooth except at the modulus knee and at
# the kernel singularity, so each region is split row-wise at the kink
# positions; zero-width panels contribute nothing.  ``hi``/``lo`` are
# (N, 1) column arrays, ``t``/``w`` the shared midpoint abscissas.


def _pow_panel(hi, t, w, p=2.0):
    """(0, hi] with algebraic grading toward 0; zero-width rows are inert."""
    live = hi > 0.0
    safe = np.where(live, hi, 1.0)
    eta = np.maximum(safe * t[None, :] ** p, 1e-300)
    jac = np.where(live, safe * p * t[None, :] ** (p - 1.0) * w, 0.0)
    return np.where(live, eta, 1.0), jac


def _lin_panel(lo, hi, t, w):
    width = np.maximum(hi - lo, 0.0)
    eta = lo + width * t[None, :]
    return np.maximum(eta, 1e-300), width * w


def _log_panel(lo, hi, t, w):
    ratio = np.maximum(hi / lo, 1.0)
    eta = lo * ratio ** t[None, :]
    return eta, eta * np.log(ratio) * w


def _log_tail(m: ModulusOfContinuity, T: np.ndarray) -> np.ndarray:
    """integral over (T, inf) of omega(s) / s**(1+alpha) ds on the log branch."""
    a = m.alpha
    return (
        m.gamma * (np.log(T / m.delta) / a + 1.0 / a ** 2) + m.knee_value() / a
    ) / T ** a


def _far_panels(integrand, marks, Z, t, w) -> np.ndarray:
    """Integrate over (0, Z] with an algebraically graded origin panel and
    geometrically graded panels split at the given row-wise marks.

    ``marks`` are candidate kink/scale positions; non-positive entries and
    entries beyond Z drop out as zero-width panels.
    """
    cols = np.concatenate(
        np.broadcast_arrays(*(np.clip(v, 0.0, Z) for v in marks)), axis=1
    )
    q = np.sort(cols, axis=1)
    first = np.where(q > 0.0, q, np.inf).min(axis=1, keepdims=True)
    first = np.minimum(first, Z)
    e, j = _pow_panel(first, t, w, 2.0)
    out = np.sum(integrand(e) * j, axis=1)
    lo = first
    for k in range(q.shape[1]):
        hi = np.maximum(q[:, k:k + 1], lo)
        e, j = _log_panel(lo, hi, t, w)
        out = out + np.sum(integrand(e) * j, axis=1)
        lo = hi
    e, j = _log_panel(lo, np.maximum(Z, lo), t, w)
    return out + np.sum(integrand(e) * j, axis=1)


def _core_panels(m: ModulusOfContinuity, x, k: float, top, t, w) -> np.ndarray:
    """Integral over (0, top] of ``second_difference(x, k*eta) / eta**(1+a)``.

    Away from the knee the integrand is ~ eta**(1-alpha) and a quadratic
    grading split at the knee crossing ``|x - delta| / k`` suffices.  Rows
    whose separation coincides with the knee instead see the slope jump
    directly and the integrand steepens to ~ eta**(-alpha); there the
    closed-form contribution of the linear lead is added exactly and only
    the quadratic remainder is integrated.
    """
    a = m.alpha

    def integrand(eta):
        return m.second_difference(x, k * eta) / eta ** (1.0 + a)

    gap = np.abs(x - m.delta) / k
    degenerate = gap < 1e-9 * top
    w_gen = np.where(degenerate, 0.0, np.minimum(gap, top))
    out = 0.0
    e, j = _pow_panel(w_gen, t, w, 2.0)
    out = out + np.sum(integrand(e) * j, axis=1)
    lo = np.where(w_gen > 0.0, w_gen, top)
    e, j = _log_panel(lo, top, t, w)
    out = out + np.sum(integrand(e) * j, axis=1)

    # slope jump across the knee: omega'(delta-) - omega'(delta+)
    jump = (
        1.0
        - (1.0 + 0.5 * a) * m.delta ** (0.5 * a)
        - m.gamma / m.delta
    )

    def residual(eta):
        return (m.second_difference(x, k * eta) - jump * k * eta) / eta ** (1.0 + a)

    w_deg = np.where(degenerate, top, 0.0)
    lead = np.where(
        degenerate[:, 0], jump * k * top[:, 0] ** (1.0 - a) / (1.0 - a), 0.0
    )
    e, j = _pow_panel(w_deg, t, w, 2.0)
    return out + lead + np.sum(residual(e) * j, axis=1)


def dissipation_lower_bound(m: ModulusOfContinuity, xi, n_nodes: int = 4096):
    """Guaranteed dissipation gain at a breakthrough pair.

    Half-separation form: the near integral takes the symmetric second
    difference of the modulus up to xi/2, the far integral the one-sided
    difference beyond, both against the singular kernel.  Concavity makes
    both integrands nonnegative, so the result must come out positive.
    """
    x = _as_positive_array(xi)[:, None]
    a = m.alpha
    d = m.delta
    t, w = _midpoints(n_nodes)
    om = m.value

    def near_fold(z):
        # eta = (xi - z)/2: resolves the modulus feature near the fold
        # point, whose scale can be far below the separation
        return (
            m.second_difference(x, x - z) / ((x - z) / 2.0) ** (1.0 + a) / 2.0
        )

    # near range (0, xi/2], split at eta = xi/4: the lower half is graded at
    # the kernel singularity (with the knee crossing |xi - d|/2 handled by
    # the core panels), the upper half is folded about eta = xi/2 so the
    # vanishing modulus argument xi - 2 eta gets its own graded variable
    I1 = _core_panels(m, x, 2.0, x / 4.0, t, w)
    I1 = I1 + _far_panels(near_fold, (d, 2.0 * x - d), x / 2.0, t, w)

    # far range, written in the overshoot variable z = 2 eta - xi so that
    # the modulus feature (which lives on the scale of z, many orders below
    # eta when xi >> delta) is resolved by the panel grading
    def far_z(z):
        return (
            (2.0 * om(x) - om(z + 2.0 * x) + om(z))
            / ((z + x) / 2.0) ** (1.0 + a)
            / 2.0
        )

    T = TAIL_FACTOR * np.maximum(x, d)
    Z = 2.0 * T - x
    I2 = _far_panels(far_z, (d - 2.0 * x, d, x), Z, t, w)

    # beyond T both modulus arguments sit on the log branch: the surviving
    # 2*omega(xi) term integrates exactly and the log difference contributes
    # -gamma*xi/((1+a) T**(1+a)) to first order
    Tf = T[:, 0]
    tail = 2.0 * om(x[:, 0]) / (a * Tf ** a) - m.gamma * x[:, 0] / ((1.0 + a) * Tf ** (1.0 + a))

    out = kernel_constant(a) * (I1 + I2 + tail)
    if np.any(~np.isfinite(out)) or np.any(out <= 0.0):
        raise AccuracyError("dissipation bound quadrature produced a non-positive value")
    return _maybe_scalar(out, xi)


def reaction_bound_parts(m: ModulusOfContinuity, xi, n_nodes: int = 4096):
    """The four range contributions whose negated sum bounds the nonlocal
    term at the higher breakthrough point from below.

    Ranges (in the offset variable relative to the higher point): beyond the
    far side, the symmetric core around zero (folded), the short overshoot
    past the partner point, and the far remainder.  The middle two are
    nonnegative by concavity and monotonicity.
    """
    x = _as_positive_array(xi)[:, None]
    a = m.alpha
    d = m.delta
    t, w = _midpoints(n_nodes)
    om = m.value
    c = kernel_constant(a)
    T = TAIL_FACTOR * np.maximum(x, d)
    Tf = T[:, 0]
    xf = x[:, 0]
    omx = om(xf)[:, None]

    log_tail_common = (
        (om(xf) - m.knee_value()) / (a * Tf ** a)
        - m.gamma * (np.log(Tf / m.delta) / a + 1.0 / a ** 2) / Tf ** a
    )

    # far side opposite the partner: s in [xi, T], kink where xi + s = knee
    def f1(s):
        return (omx - om(x + s)) / s ** (1.0 + a)

    c1 = np.clip(d - x, x, T)
    a1_num = 0.0
    for lo, hi in ((x, c1), (c1, T)):
        e, j = _log_panel(lo, hi, t, w)
        a1_num = a1_num + np.sum(f1(e) * j, axis=1)
    A1 = c * (a1_num + log_tail_common - m.gamma * xf / ((1.0 + a) * Tf ** (1.0 + a)))

    # symmetric core, folded to (0, xi]: lower half graded at the kernel
    # singularity, upper half folded about eta = xi (vanishing argument)
    def f2_fold(z):
        return m.second_difference(x, x - z) / (x - z) ** (1.0 + a)

    A2 = _core_panels(m, x, 1.0, x / 2.0, t, w)
    A2 = c * (A2 + _far_panels(f2_fold, (d, 2.0 * x - d), x / 2.0, t, w))

    # short overshoot past the partner and the far remainder, both written
    # in the overshoot variable z = eta - xi so the modulus feature is
    # resolved even when it is tiny relative to the separation
    def f34_z(z):
        return (omx - om(z)) / (z + x) ** (1.0 + a)

    c3 = np.minimum(d, x)
    e, j = _pow_panel(c3, t, w, 2.0)
    A3 = np.sum(f34_z(e) * j, axis=1)
    e, j = _log_panel(c3, np.maximum(x, c3), t, w)
    A3 = c * (A3 + np.sum(f34_z(e) * j, axis=1))

    Z4 = T - x
    c4 = np.clip(d, x, Z4)
    a4_num = 0.0
    for lo, hi in ((x, c4), (c4, Z4)):
        e, j = _log_panel(lo, hi, t, w)
        a4_num = a4_num + np.sum(f34_z(e) * j, axis=1)
    A4 = c * (a4_num + log_tail_common + m.gamma * xf / ((1.0 + a) * Tf ** (1.0 + a)))

    for part in (A1, A2, A3, A4):
        if np.any(~np.isfinite(part)):
            raise AccuracyError("reaction bound quadrature produced a non-finite value")
    if np.ndim(xi) == 0:
        return float(A1[0]), float(A2[0]), float(A3[0]), float(A4[0])
    return A1, A2, A3, A4


def reaction_upper_bound(m: ModulusOfContinuity, xi, n_nodes: int = 4096):
    """Upper envelope for minus the nonlocal term at the higher point."""
    parts = reaction_bound_parts(m, xi, n_nodes)
    if np.ndim(xi) == 0:
        return -sum(parts)
    return -(parts[0] + parts[1] + parts[2] + parts[3])


def velocity_modulus(m: ModulusOfContinuity, xi, n_nodes: int = 4096):
    """Modulus of continuity the velocity inherits from the density, with
    the paper-style universal prefactor left at one (reported raw)."""
    x = _as_positive_array(xi)[:, None]
    a = m.alpha
    d = m.delta
    t, w = _midpoints(n_nodes)
    om = m.value

    # (0, xi]: integrand omega(s)/s**alpha, graded at the origin, split at
    # the knee when the knee falls inside
    def g1(s):
        return om(s) / s ** a

    cut = np.minimum(d, x)
    e1, j1 = _pow_panel(cut, t, w)
    I1 = np.sum(g1(e1) * j1, axis=1)
    e2, j2 = _log_panel(cut, np.maximum(x, cut), t, w)
    I1 = I1 + np.sum(g1(e2) * j2, axis=1)

    # [xi, T] against the stronger kernel, then the exact log tail
    def g2(s):
        return om(s) / s ** (1.0 + a)

    T = TAIL_FACTOR * np.maximum(x, d)
    c2 = np.clip(d, x, T)
    I2 = 0.0
    for lo, hi in ((x, c2), (c2, T)):
        e, j = _log_panel(lo, hi, t, w)
        I2 = I2 + np.sum(g2(e) * j, axis=1)
    xf = x[:, 0]
    out = I1 + xf * (I2 + _log_tail(m, T[:, 0]))
    if np.any(~np.isfinite(out)) or np.any(out <= 0.0):
        raise AccuracyError("velocity modulus quadrature produced a non-positive value")
    return _maybe_scalar(out, xi)


def breakthrough_derivative_bound(
    m: ModulusOfContinuity, xi, rho_min: float, n_nodes: int = 4096
):
    """Upper bound for the time derivative of the density difference at a
    breakthrough pair: transport + amplification - rho_min * dissipation.
    Negative values rule the breakthrough out at that separation.
    """
    if rho_min <= 0.0:
        raise ParameterError("rho_min must be positive")
    x = _as_positive_array(xi)
    out = (
        m.slope(x) * velocity_modulus(m, x, n_nodes)
        + m.value(x) * reaction_upper_bound(m, x, n_nodes)
        - rho_min * dissipation_lower_bound(m, x, n_nodes)
    )
    return _maybe_scalar(out, xi)


@dataclass(frozen=True)
class CertifiedModulus:
    """Outcome of the parameter search: the modulus, the sampled
    separations, the functional values there, and the worst (largest)
    value, which is negative when the certificate holds."""

    modulus: ModulusOfContinuity
    rho_min: float
    xi: np.ndarray
    values: np.ndarray
    margin: float

    @property
    def certified(self) -> bool:
        return self.margin < 0.0


def find_certified_modulus(
    rho_min: float,
    alpha: float,
    xi_lo_factor: float = 1e-4,
    xi_hi_factor: float = 1e3,
    n_xi: int = 200,
    n_nodes: int = 2048,
    delta_start: float | None = None,
    shrink: float = 2.0,
    max_rounds: int = 24,
    gamma_fraction: float = 0.5,
) -> CertifiedModulus | None:
    """Search decreasing knee sizes for a certified modulus.

    For each candidate ``delta`` the search takes ``gamma`` as a fixed
    fraction of the largest admissible value, samples separations
    log-uniformly in ``[xi_lo_factor*delta, xi_hi_factor*delta]``, and
    accepts the first (largest) knee whose breakthrough bound is negative
    everywhere.  Returns None when no candidate in the sweep certifies.
    """
    if rho_min <= 0.0:
        raise ParameterError("rho_min must be positive")
    if delta_start is None:
        delta_start = min(0.25, 0.25 * rho_min ** (2.0 / alpha))
    delta = delta_start
    best = None
    for _ in range(max_rounds):
        gamma = gamma_fraction * ModulusOfContinuity.max_gamma(delta, alpha)
        if gamma <= 0.0:
            delta /= shrink
            continue
        m = ModulusOfContinuity(delta, gamma, alpha)
        xi = np.geomspace(xi_lo_factor * delta, xi_hi_factor * delta, n_xi)
        vals = breakthrough_derivative_bound(m, xi, rho_min, n_nodes)
        margin = float(np.max(vals))
        result = CertifiedModulus(m, rho_min, xi, vals, margin)
        if margin < 0.0:
            return result
        best = result
        delta /= shrink
    return None if best is None or not best.certified else best


@dataclass(frozen=True)
class ModulusCheck:
    """Result of an all-pairs modulus check: the worst margin
    ``omega(d/scale) - (f(x) - f(y))`` over distinct interpolated nodes and
    the pair attaining it."""

    obeys: bool
    margin: float
    x: float
    y: float


def check_modulus(
    field: RealField,
    m: ModulusOfContinuity,
    scale: float = 1.0,
    factor: int = 4,
    block: int = 512,
) -> ModulusCheck:
    """Check ``f(x) - f(y) < omega(d(x,y)/scale)`` over all pairs of the
    ``factor``-times interpolated grid, with the periodic distance."""
    if scale <= 0.0 or not np.isfinite(scale):
        raise ParameterError("scale must be a positive real")
    fine = refine(field, factor)
    vals = fine.values
    xs = fine.grid.nodes
    L = fine.grid.length
    n = fine.grid.n
    best = np.inf
    best_pair = (0.0, 0.0)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d = np.abs(xs[lo:hi, None] - xs[None, :])
        d = np.minimum(d, L - d)
        margins = m.value(d / scale) - (vals[lo:hi, None] - vals[None, :])
        sub = np.arange(lo, hi)
        margins[sub - lo, sub] = np.inf  # exclude coincident pairs
        j = np.unravel_index(np.argmin(margins), margins.shape)
        if margins[j] < best:
            best = float(margins[j])
            best_pair = (float(xs[lo + j[0]]), float(xs[j[1]]))
    return ModulusCheck(obeys=best > 0.0, margin=best, x=best_pair[0], y=best_pair[1])


def choose_scale(
    field: RealField,
    m: ModulusOfContinuity,
    min_margin: float = 0.0,
    max_halvings: int = 80,
) -> float | None:
    """Smallest power-of-two dilation 1/2**j at which the field obeys the
    rescaled modulus with at least the requested margin."""
    scale = 1.0
    for _ in range(max_halvings + 1):
        if check_modulus(field, m, scale).margin > min_margin:
            return scale
        scale /= 2.0
    return None
