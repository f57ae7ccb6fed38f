"""The scalar cubic soliton and everything derived from it in closed form.

The base profile w0 solves -w'' - (2/r) w' + w = w^3 with w'(0) = 0 and
exponential decay.  It is located by bisection on the center value b of the
radial IVP: for b below the separatrix the trajectory turns around while
still positive (it falls into the interior equilibrium), above it the
trajectory crosses zero.  The bisected profile is then polished by Newton
on the grid so that the discrete equation holds to roundoff, and the
constants C0 = int w0^2, C1 = int w0^4 and the optimal Gagliardo-Nirenberg
constant are read off by quadrature.

Every positive normalized solution of the scalar problem with mass a^2 and
nonlinearity coefficient mu is an explicit rescaling of w0; scale_soliton
realizes it together with its frequency, its energy level
level(a, mu) = C0*C1 / (8 mu^2 a^2), and the closed-form dilation profiles
used by the linking construction.
"""

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .radial import RadialField, RadialGrid, interaction, kinetic, mass


class ShootingError(RuntimeError):
    """Bisection bracket or residual failure in the soliton solve."""


class TailError(ValueError):
    """A rescaled profile does not decay below tolerance at r_max."""


class GNViolationError(RuntimeError):
    """A trial field beat the optimal Gagliardo-Nirenberg quotient."""


@dataclass(frozen=True)
class GroundStateProfile:
    """The base soliton with its quadrature constants.

    S is the optimal constant in int w^4 <= S (int w^2)^{1/2}
    (int |grad w|^2)^{3/2}, evaluated as the quotient at w0 itself;
    ode_residual is the sup norm of the discrete equation at w0.
    """

    w0: RadialField
    b0: float
    C0: float
    C1: float
    S: float
    ode_residual: float

    @property
    def grid(self):
        return self.w0.grid

    def level(self, a, mu):
        """Least energy of the scalar problem with mass a^2, coefficient mu."""
        return self.C0 * self.C1 / (8.0 * mu**2 * a**2)

    def to_dict(self):
        g = self.grid
        return {"b0": self.b0, "C0": self.C0, "C1": self.C1, "S": self.S,
                "n": g.n, "r_max": g.r_max, "ode_residual": self.ode_residual}


@dataclass(frozen=True)
class ScaledSoliton:
    """Unique positive normalized solution for mass a^2 and coefficient mu."""

    a: float
    mu: float
    lam: float
    w: RadialField
    level: float


def _rk4_classify(b, step, r_end):
    """Integrate the center-value IVP; 'crosses' / 'returns' / 'decayed'.

    Starts from the even series w = b + (b - b^3) r^2 / 6 + O(r^4) to step
    over the coordinate singularity at r = 0.
    """
    r = 10.0 * step
    c2 = (b - b**3) / 6.0
    c4 = c2 * (1.0 - 3.0 * b * b) / 20.0
    w = b + c2 * r**2 + c4 * r**4
    wp = 2.0 * c2 * r + 4.0 * c4 * r**3

    def f(r, w, wp):
        return wp, -2.0 / r * wp + w - w**3

    nstep = int(np.ceil((r_end - r) / step))
    for _ in range(nstep):
        k1 = f(r, w, wp)
        k2 = f(r + step / 2, w + step / 2 * k1[0], wp + step / 2 * k1[1])
        k3 = f(r + step / 2, w + step / 2 * k2[0], wp + step / 2 * k2[1])
        k4 = f(r + step, w + step * k3[0], wp + step * k3[1])
        w += step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        wp += step / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r += step
        if w <= 0.0:
            return "crosses"
        if wp > 0.0:
            return "returns"
    return "decayed"


def _rk4_profile(b, step, r_end):
    """Trajectory of the IVP, stopping once the solution leaves the separatrix."""
    r = 10.0 * step
    c2 = (b - b**3) / 6.0
    c4 = c2 * (1.0 - 3.0 * b * b) / 20.0
    w = b + c2 * r**2 + c4 * r**4
    wp = 2.0 * c2 * r + 4.0 * c4 * r**3
    rs, ws = [0.0, r], [b, w]

    def f(r, w, wp):
        return wp, -2.0 / r * wp + w - w**3

    nstep = int(np.ceil((r_end - r) / step))
    for _ in range(nstep):
        k1 = f(r, w, wp)
        k2 = f(r + step / 2, w + step / 2 * k1[0], wp + step / 2 * k1[1])
        k3 = f(r + step / 2, w + step / 2 * k2[0], wp + step / 2 * k2[1])
        k4 = f(r + step, w + step * k3[0], wp + step * k3[1])
        w += step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        wp += step / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        r += step
        if w <= 0.0 or wp > 0.0:
            break
        rs.append(r)
        ws.append(w)
    return np.array(rs), np.array(ws)


def classify_center_value(b, step=1e-3, r_end=25.0):
    """Expose the separatrix classification for bracket tests."""
    return _rk4_classify(b, step, r_end)


def solve_soliton(grid=None, tol=1e-8, bracket=(1.5, 8.0), step=1e-3,
                  classify_r=25.0):
    """Compute the base soliton on the grid.

    Bisection on the center value picks the decaying separatrix; the
    trajectory (with an exponential tail graft) seeds a Newton solve of the
    discrete equation lap(w) + w - w^3 = 0, which drives the residual to
    roundoff.  Raises ShootingError if no bracket is found or the residual
    stays above tol.
    """
    if grid is None:
        grid = RadialGrid()
    scan = np.linspace(bracket[0], bracket[1], 14)
    kinds = [_rk4_classify(b, 4 * step, classify_r) for b in scan]
    lo = hi = None
    for i in range(len(scan) - 1):
        if kinds[i] == "returns" and kinds[i + 1] == "crosses":
            lo, hi = scan[i], scan[i + 1]
            break
    if lo is None:
        raise ShootingError(f"no separatrix bracket in {bracket}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _rk4_classify(mid, step, classify_r) == "returns":
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * mid:
            break
    b_sep = 0.5 * (lo + hi)

    rs, ws = _rk4_profile(b_sep, step, classify_r)
    keep = ws > 1e-7
    rs, ws = rs[keep], ws[keep]
    from scipy.interpolate import CubicSpline
    traj = CubicSpline(rs, ws, bc_type=((1, 0.0), "not-a-knot"))
    w_init = np.where(grid.nodes <= rs[-1], traj(np.minimum(grid.nodes, rs[-1])), 0.0)
    tail_amp = ws[-1] * rs[-1] * np.exp(rs[-1])
    beyond = grid.nodes > rs[-1]
    w_init[beyond] = tail_amp * np.exp(-grid.nodes[beyond]) / grid.nodes[beyond]

    w = _newton_scalar(grid, w_init)
    resid = float(np.max(np.abs(grid.laplacian @ w + w - w**3)))
    if resid > tol:
        raise ShootingError(f"ode residual {resid:.3e} above tol {tol:g}")
    body = w > 1e-12 * w[0]  # below this the solve's roundoff floor dominates
    if np.any(w <= 0) or np.any(np.diff(w[body]) >= 0):
        raise ShootingError("polished profile is not positive decreasing")

    field = RadialField(grid, w)
    c0 = mass(field)
    c1 = interaction(field, field)
    t = kinetic(field)
    s_const = c1 / np.sqrt(c0 * t**3)
    return GroundStateProfile(w0=field, b0=float(grid.origin_value(w)),
                              C0=c0, C1=c1, S=s_const, ode_residual=resid)


def _newton_scalar(grid, w_init, max_iter=50, rtol=1e-13):
    """Damped Newton on lap(w) + w - w^3 = 0.

    Progress is measured in the quadrature-weighted residual norm; the
    pointwise residual near the origin is amplified by the 1/(r^2 h) weight
    scaling and is meaningful only at convergence.
    """
    lap = grid.laplacian.tocsc()
    eye = sp.identity(grid.n, format="csc")
    w = w_init.copy()

    def wnorm(f_val):
        return float(np.sqrt(grid.weights @ f_val**2))

    f_val = lap @ w + w - w**3
    res = wnorm(f_val)
    for _ in range(max_iter):
        if res < rtol:
            break
        jac = lap + eye - sp.diags(3.0 * w**2)
        dw = splu(jac.tocsc()).solve(f_val)
        lam_damp = 1.0
        for _ in range(30):
            trial = w - lam_damp * dw
            f_trial = lap @ trial + trial - trial**3
            res_trial = wnorm(f_trial)
            if res_trial < res:
                break
            lam_damp *= 0.5
        else:
            break
        w, f_val, res = trial, f_trial, res_trial
    return w


def reference_constants():
    """Committed oracle constants of w0 (shooting settings included)."""
    with resources.files("cnls.data").joinpath("w0_constants.json").open() as fh:
        return json.load(fh)


def soliton_spline(gs):
    """Clamped cubic spline of w0 over [0, r_max]; zero beyond."""
    from .radial import _origin_spline
    return _origin_spline(gs.w0)


def scale_soliton(a, mu, gs, tail_tol=1e-10):
    """The rescaled soliton w_{a,mu} with frequency and level in closed form.

    w(r) = (C0 / (mu^{3/2} a^2)) * w0((C0 / (mu a^2)) r); raises TailError
    when the rescaled profile has not decayed below tail_tol at r_max
    (mu a^2 too large for the grid).
    """
    if a <= 0 or mu <= 0:
        raise ValueError("a and mu must be positive")
    grid = gs.grid
    sigma = gs.C0 / (mu * a**2)
    pref = gs.C0 / (mu**1.5 * a**2)
    spline = soliton_spline(gs)
    arg = sigma * grid.nodes
    vals = np.zeros(grid.n)
    inside = arg <= grid.r_max
    vals[inside] = pref * spline(arg[inside])
    edge = vals[-1] if inside[-1] else 0.0
    if abs(edge) > tail_tol * pref * gs.b0:
        raise TailError(
            f"w_(a={a:g}, mu={mu:g}) tail {edge:.2e} above tolerance; "
            f"mu*a^2 = {mu * a**2:g} too large for r_max = {grid.r_max:g}")
    lam = -gs.C0**2 / (mu**2 * a**4)
    level = gs.C0 * gs.C1 / (8.0 * mu**2 * a**2)
    return ScaledSoliton(a=float(a), mu=float(mu), lam=lam,
                         w=RadialField(grid, vals), level=level)


def scalar_energy(mu, w):
    """I_mu(w) = kinetic/2 - mu * int w^4 / 4."""
    return 0.5 * kinetic(w) - 0.25 * mu * interaction(w, w)


def dilation_profiles(w, mu, beta, s_values):
    """Closed-form dilation diagnostics of a profile.

    phi(s) is the energy of the s-dilation under coefficient mu alone;
    psi(s) is the s-derivative of the energy under the stiffened
    coefficient mu + beta.  Both are evaluated from the two quadrature
    constants of w, with no resampling.  Returns an array with columns
    (s, phi, psi).
    """
    k_w = kinetic(w)
    q_w = interaction(w, w)
    s = np.asarray(s_values, dtype=float)
    phi = 0.5 * np.exp(2 * s) * k_w - 0.25 * mu * np.exp(3 * s) * q_w
    psi = np.exp(2 * s) * (k_w - 0.75 * np.exp(s) * (mu + beta) * q_w)
    return np.column_stack([s, phi, psi])


def gn_quotient(w):
    """(int w^2)(int |grad w|^2)^3 / (int w^4)^2, the quantity S bounds."""
    q = interaction(w, w)
    if q <= 0:
        raise ValueError("trial field must be nonzero")
    return mass(w) * kinetic(w)**3 / q**2


def verify_gn_constant(gs, trials, slack=1e-9):
    """Check every trial quotient against the optimum 1/S^2.

    Returns the list of quotients; raises GNViolationError if a trial beats
    the bound beyond slack (which would signal a quadrature or shooting
    defect rather than new mathematics).
    """
    if not trials:
        raise ValueError("need at least one trial field")
    best = 1.0 / gs.S**2
    quotients = [gn_quotient(w) for w in trials]
    for q in quotients:
        if q < best * (1.0 - slack):
            raise GNViolationError(
                f"trial quotient {q:.12g} below the optimum {best:.12g}")
    return quotients
