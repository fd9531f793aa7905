"""Mean-field reduction: the planar ODE, its phase curve, and final sizes.

With spatially blind interaction the susceptible/infected fractions (x, y)
close on themselves:

    x' = -beta * x * y
    y' =  beta * x * y - y

started from (rho0, rho1). The removed fraction z obeys z' = y, so x + y + z
is conserved. Everything in this module is a consequence of this system:

* the phase curve y(x) obtained by dividing the two equations,
* the infection peak at x = 1/beta (present only when rho0 > 1/beta),
* the final susceptible fraction x_inf, the root of
  x = rho0 * exp(-beta * (rho0 + rho1 - x)),
* the limit of x_inf under vanishing seeding, the first positive root of
  x = exp(beta * (x - 1)), nontrivial exactly when beta > 1,
* the one-parameter relations between beta, rho0 and x_inf when
  rho0 + rho1 = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, InvalidProfileError

MAX_ODE_DT = 0.1


@dataclass(frozen=True)
class MeanFieldParams:
    """Infection rate and initial fractions for the planar system."""

    beta: float
    rho0: float
    rho1: float

    def __post_init__(self) -> None:
        if not self.beta > 0.0:
            raise InvalidProfileError(f"beta must be positive, got {self.beta}")
        if self.rho0 < 0.0 or self.rho1 < 0.0 or self.rho0 + self.rho1 > 1.0:
            raise InvalidProfileError(
                f"need rho0, rho1 >= 0 and rho0 + rho1 <= 1, got "
                f"({self.rho0}, {self.rho1})")


class MeanFieldTrajectory(NamedTuple):
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


class HatX(NamedTuple):
    """Limiting final size under vanishing seeding.

    ``degenerate`` marks beta <= 1, where the only root in (0, 1] is 1 and no
    epidemic survives the limit.
    """

    value: float
    degenerate: bool


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _bisect(f, lo: float, hi: float) -> float:
    """Bisection to floating-point resolution.

    The bracket's sign change is verified before iterating; the loop stops
    when the midpoint collides with an endpoint, i.e. at full double
    precision (residuals come out at roundoff level, well under 1e-12).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise DomainError(
            f"no sign change on bracket [{lo:.6g}, {hi:.6g}]: "
            f"f(lo)={flo:.3e}, f(hi)={fhi:.3e}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (fhi > 0.0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

def ode_integrate(params: MeanFieldParams, t_end: float,
                  dt: float = 1e-3) -> MeanFieldTrajectory:
    """Integrate the planar system with fixed-step classic Runge-Kutta.

    Returns the full step-resolved trajectory including z (removed), so the
    linear conservation of x + y + z can be checked by the caller.
    """
    if not 0.0 < dt <= MAX_ODE_DT:
        raise DomainError(f"dt must lie in (0, {MAX_ODE_DT}], got {dt}")
    if t_end < 0.0:
        raise DomainError(f"t_end must be nonnegative, got {t_end}")
    beta = params.beta
    n = max(1, math.ceil(t_end / dt - 1e-12))
    h = t_end / n if t_end > 0 else dt

    def f(u):
        x, y, _ = u
        inf = beta * x * y
        return np.array([-inf, inf - y, y])

    u = np.array([params.rho0, params.rho1, 0.0])
    out = np.empty((n + 1, 3))
    out[0] = u
    for k in range(n):
        k1 = f(u)
        k2 = f(u + 0.5 * h * k1)
        k3 = f(u + 0.5 * h * k2)
        k4 = f(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = u
    t = np.linspace(0.0, t_end if t_end > 0 else h * n, n + 1)
    return MeanFieldTrajectory(t, out[:, 0], out[:, 1], out[:, 2])


# ---------------------------------------------------------------------------
# phase plane
# ---------------------------------------------------------------------------

def phase_curve(params: MeanFieldParams, x) -> np.ndarray | float:
    """Infected fraction along the orbit through (rho0, rho1), as y(x).

    y(x) = -x + log(x)/beta + rho0 + rho1 - log(rho0)/beta, valid for
    0 < x <= rho0.
    """
    if not params.rho0 > 0.0:
        raise DomainError("phase curve needs rho0 > 0")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0) or np.any(x_arr > params.rho0):
        raise DomainError(
            f"phase curve defined on 0 < x <= rho0 = {params.rho0}")
    b = params.beta
    y = (-x_arr + np.log(x_arr) / b + params.rho0 + params.rho1
         - math.log(params.rho0) / b)
    return float(y) if np.isscalar(x) else y


def peak_infection(params: MeanFieldParams,
                   dt: float = 1e-3) -> Optional[tuple[float, float]]:
    """Time and height of the infection maximum, or None if y only decays.

    The peak exists iff rho0 > 1/beta (at the boundary the derivative of y
    is nonpositive from the start). Its height is closed-form,

        y_peak = rho0 + rho1 - 1/beta - log(beta * rho0)/beta,

    attained where x crosses 1/beta; the crossing time is located on the
    integrated trajectory by linear interpolation.
    """
    if not params.rho1 > 0.0:
        raise DomainError("peak location needs rho1 > 0")
    b = params.beta
    if params.rho0 <= 1.0 / b:
        return None
    y_peak = params.rho0 + params.rho1 - 1.0 / b - math.log(b * params.rho0) / b

    x_star = 1.0 / b
    t_end = 4.0
    for _ in range(12):
        traj = ode_integrate(params, t_end, dt)
        below = np.nonzero(traj.x <= x_star)[0]
        if len(below):
            j = below[0]
            if j == 0:
                return 0.0, y_peak
            # linear interpolation of the crossing between steps j-1 and j
            x0, x1 = traj.x[j - 1], traj.x[j]
            frac = (x0 - x_star) / (x0 - x1)
            return float(traj.t[j - 1] + frac * (traj.t[j] - traj.t[j - 1])), y_peak
        t_end *= 2.0
    raise DomainError("infection peak not reached within the search horizon")


# ---------------------------------------------------------------------------
# final sizes
# ---------------------------------------------------------------------------

def final_size(beta: float, rho0: float, rho1: float) -> float:
    """Limiting susceptible fraction of the planar system.

    Degenerate cases are exact: rho1 = 0 gives rho0 (nothing happens) and
    rho0 = 0 gives 0. Otherwise the value is the unique root in (0, rho0) of

        x = rho0 * exp(-beta * (rho0 + rho1 - x)),

    found by bisection; it is strictly below both rho0 and 1/beta.
    """
    MeanFieldParams(beta, rho0, rho1)
    if rho1 == 0.0:
        return rho0
    if rho0 == 0.0:
        return 0.0
    mass = rho0 + rho1

    def f(x):
        return x - rho0 * math.exp(-beta * (mass - x))

    return _bisect(f, 0.0, rho0)


def hat_x_infinity(beta: float) -> HatX:
    """First positive root of x = exp(beta * (x - 1)).

    For beta > 1 the equation has exactly two roots in (0, 1], the smaller of
    which is the meaningful limit; for beta <= 1 the only root is 1, returned
    with the degenerate flag set.
    """
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if beta <= 1.0:
        return HatX(1.0, True)

    def f(x):
        return x - math.exp(beta * (x - 1.0))

    return HatX(_bisect(f, 0.0, 1.0 - 1e-9), False)


def xinf_max(beta: float) -> float:
    """Supremum of attainable final sizes over rho0 when rho0 + rho1 = 1.

    First positive root of 1 = x * exp(beta * (1 - x)); equals 1 for
    beta <= 1. Solved on its own equation (not by delegating to
    :func:`hat_x_infinity`) so the two routes stay independent checks of one
    another; algebraically the two values coincide.
    """
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if beta <= 1.0:
        return 1.0

    def f(x):
        return x * math.exp(beta * (1.0 - x)) - 1.0

    return _bisect(f, 0.0, 1.0 - 1e-9)


# ---------------------------------------------------------------------------
# parameter relations along rho0 + rho1 = 1
# ---------------------------------------------------------------------------

def rho0_from_final_size(x_inf: float, beta: float) -> float:
    """Initial susceptible fraction producing a given final size at fixed beta.

    rho0 = x_inf * exp(beta * (1 - x_inf)), increasing on the admissible
    range 0 < x_inf < xinf_max(beta); the endpoints are excluded.
    """
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if not 0.0 < x_inf < xinf_max(beta):
        raise DomainError(
            f"x_inf = {x_inf} outside (0, {xinf_max(beta):.12g}) for beta = {beta}")
    return x_inf * math.exp(beta * (1.0 - x_inf))


def beta_from_final_size(x_inf: float, rho0: float) -> float:
    """Infection rate producing a given final size at fixed rho0.

    beta = (log x_inf - log rho0) / (x_inf - 1), decreasing on 0 < x_inf <
    rho0; the endpoints are excluded.
    """
    if not 0.0 < rho0 <= 1.0:
        raise DomainError(f"rho0 must lie in (0, 1], got {rho0}")
    if not 0.0 < x_inf < rho0:
        raise DomainError(f"x_inf = {x_inf} outside (0, rho0 = {rho0})")
    return (math.log(x_inf) - math.log(rho0)) / (x_inf - 1.0)


def rho0_from_beta(beta: float, x_inf: float) -> float:
    """Initial susceptible fraction as a function of beta at fixed final size.

    Same expression as :func:`rho0_from_final_size`, seen as a function of
    beta on 0 < beta < log(x_inf) / (x_inf - 1), where rho0 stays below 1.
    """
    if not 0.0 < x_inf < 1.0:
        raise DomainError(f"x_inf must lie in (0, 1), got {x_inf}")
    beta_sup = math.log(x_inf) / (x_inf - 1.0)
    if not 0.0 < beta < beta_sup:
        raise DomainError(
            f"beta = {beta} outside (0, {beta_sup:.12g}) for x_inf = {x_inf}")
    return x_inf * math.exp(beta * (1.0 - x_inf))
