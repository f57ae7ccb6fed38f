"""Radial discretization of H^1_rad(R^3).

Every integral over R^3 of a radial function reduces to
4*pi * int_0^rmax f(r) r^2 dr, evaluated here with composite Simpson
weights on a uniform grid (0, rmax].  Fields are assumed smooth and even
in r (u'(0) = 0), which is the regularity class of radial H^1 profiles;
derivative stencils are fourth order and fold the origin in through an
even-extension ghost value.

The module also provides the functionals used throughout the package:
mass, kinetic energy, quartic interactions, the total energy of a
k-component system, the Pohozaev combination G, the scale-invariant
Rayleigh quotient, the mass-preserving radial dilation, and the L^2
gradient of the energy under the grid's quadrature inner product.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class GridMismatchError(ValueError):
    """Fields living on different grids were combined."""


class DegenerateQuotientError(ValueError):
    """Rayleigh quotient or Pohozaev projection requested with B <= 0."""


class DilationRangeError(ValueError):
    """Dilation would push non-negligible mass off the grid."""


def _fd_weights(offsets, deriv_order):
    """Finite-difference weights for d^m/dr^m at 0 from nodes offsets*h.

    Returned weights are in units of h^{-m}.
    """
    offsets = np.asarray(offsets, dtype=float)
    p = offsets.size
    rhs = np.zeros(p)
    rhs[deriv_order] = float(math.factorial(deriv_order))
    vander = np.vstack([offsets**k for k in range(p)])
    return np.linalg.solve(vander, rhs)


def _simpson_coefficients(n, h):
    """Composite Simpson coefficients for n uniform intervals on [0, n*h].

    For odd n the last three intervals use the 3/8 rule, keeping the rule
    exact on cubics.  Returns the n+1 endpoint coefficients.
    """
    if n < 4:
        raise ValueError("need at least 4 intervals")
    c = np.zeros(n + 1)
    if n % 2 == 0:
        m = n
    else:
        m = n - 3
    c[0:m + 1:2] += 2.0 * h / 3.0
    c[1:m:2] += 4.0 * h / 3.0
    c[0] = h / 3.0
    c[m] = h / 3.0 if n % 2 else c[m]
    if n % 2 == 0:
        c[n] = h / 3.0
    else:
        c[m] += 3.0 * h / 8.0
        c[m + 1] += 9.0 * h / 8.0
        c[m + 2] += 9.0 * h / 8.0
        c[n] = 3.0 * h / 8.0
    return c


class RadialGrid:
    """Uniform radial grid on (0, r_max] with 4*pi*r^2*dr quadrature weights.

    weights[j] approximates the volume element so that
    sum_j weights[j] * f(r_j) ~ int_{R^3} f(|x|) dx.  The r = 0 endpoint is
    not a node; its integrand contribution vanishes under the r^2 weight.
    """

    def __init__(self, n=4096, r_max=30.0):
        if n < 8:
            raise ValueError("grid needs at least 8 nodes")
        if r_max <= 0:
            raise ValueError("r_max must be positive")
        self.n = int(n)
        self.r_max = float(r_max)
        self.h = self.r_max / self.n
        self.nodes = self.h * np.arange(1, self.n + 1)
        coeff = _simpson_coefficients(self.n, self.h)
        self.weights = 4.0 * np.pi * coeff[1:] * self.nodes**2
        if not (np.all(np.diff(self.nodes) > 0) and np.all(self.weights > 0)):
            raise ValueError("grid construction produced invalid nodes/weights")
        self._d1 = None
        self._d2 = None
        self._lap = None

    def __eq__(self, other):
        return (isinstance(other, RadialGrid)
                and self.n == other.n and self.r_max == other.r_max)

    def __hash__(self):
        return hash((self.n, self.r_max))

    def __repr__(self):
        return f"RadialGrid(n={self.n}, r_max={self.r_max})"

    def quad(self, samples):
        """Quadrature of int_{R^3} f for nodal samples f(r_j)."""
        return float(np.real(self.weights @ samples)) if np.isrealobj(samples) \
            else complex(self.weights @ samples)

    def origin_value(self, values):
        """Even-quartic extrapolation of a smooth radial field to r = 0."""
        return 1.5 * values[0] - 0.6 * values[1] + 0.1 * values[2]

    @property
    def d1(self):
        """Fourth-order first-derivative matrix (even extension at r = 0)."""
        if self._d1 is None:
            self._d1 = self._build_d1()
        return self._d1

    def _build_derivative(self, order):
        """Fourth-order derivative matrix of the given order.

        Interior stencils are centered; the origin is folded in through the
        even extension u(-h) = u(h) and the even-quartic ghost value u(0);
        the two rightmost rows are one-sided, so constants differentiate to
        exactly zero everywhere.
        """
        n, h = self.n, self.h
        ghost = np.array([1.5, -0.6, 0.1])  # u(0) from u(h), u(2h), u(3h)
        scale = h**order
        rows, cols, vals = [], [], []

        def put(i, js, cs):
            for j, c in zip(js, cs):
                if abs(c) > 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(c / scale)

        center = _fd_weights([-2, -1, 0, 1, 2], order)
        # r = h: contributions of u(-h) -> u(h) and u(0) -> ghost
        c0 = np.zeros(4)
        c0[:3] += center[1] * ghost
        c0[0] += center[0] + center[2]
        c0[1] += center[3]
        c0[2] += center[4]
        put(0, [0, 1, 2, 3], c0)
        # r = 2h: only u(0) -> ghost
        c1 = np.zeros(4)
        c1[:3] += center[0] * ghost
        c1[0] += center[1]
        c1[1] += center[2]
        c1[2] += center[3]
        c1[3] += center[4]
        put(1, [0, 1, 2, 3], c1)
        for j in range(2, n - 2):
            put(j, [j - 2, j - 1, j, j + 1, j + 2], center)
        put(n - 2, [n - 5, n - 4, n - 3, n - 2, n - 1],
            _fd_weights([-3, -2, -1, 0, 1], order))
        put(n - 1, [n - 5, n - 4, n - 3, n - 2, n - 1],
            _fd_weights([-4, -3, -2, -1, 0], order))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def _build_d1(self):
        return self._build_derivative(1)

    @property
    def d2(self):
        """Fourth-order second-derivative matrix (same closures as d1)."""
        if self._d2 is None:
            self._d2 = self._build_derivative(2)
        return self._d2

    @property
    def laplacian(self):
        """Discrete -Delta = -(d2 + (2/r) d1), pointwise fourth order.

        Collocation form: consistent at every node (understanding the fields
        as smooth and even at the origin), used by the energy gradient and
        all elliptic solves.  It is symmetric under the quadrature inner
        product only up to the discretization order.
        """
        if self._lap is None:
            self._lap = (-(self.d2
                           + sp.diags(2.0 / self.nodes) @ self.d1)).tocsr()
        return self._lap

    def inner(self, u, v):
        """Quadrature inner product <u, v>."""
        return float(self.weights @ (np.conj(u) * v)).real if np.isrealobj(u) and np.isrealobj(v) \
            else complex(self.weights @ (np.conj(u) * v))


@dataclass(frozen=True)
class RadialField:
    """Real radial profile sampled on a RadialGrid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError("values must match the grid size")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def tail(self):
        """|u| at the truncation radius, for soliton tail checks."""
        return abs(float(self.values[-1]))

    def check_soliton_tail(self, tol=1e-10):
        scale = float(np.max(np.abs(self.values)))
        return self.tail <= tol * max(scale, 1.0)


@dataclass(frozen=True)
class SystemParams:
    """Component count, masses a_i and symmetric coupling matrix beta_ij.

    The diagonal carries the self-interactions (mu_i = beta_ii); for two
    components mu1 = beta[0,0], mu2 = beta[1,1], beta12 = beta[0,1].
    """

    a: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        beta = np.asarray(self.beta, dtype=float)
        if a.ndim != 1 or np.any(a <= 0):
            raise ValueError("masses a_i must be positive")
        k = a.size
        if beta.shape != (k, k):
            raise ValueError("beta must be k x k")
        if not np.allclose(beta, beta.T, rtol=0.0, atol=1e-14 * (1 + np.abs(beta).max())):
            raise ValueError("beta must be symmetric")
        if np.any(np.diag(beta) <= 0):
            raise ValueError("diagonal couplings beta_ii must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", 0.5 * (beta + beta.T))

    @property
    def k(self):
        return self.a.size

    @classmethod
    def two_component(cls, a1, a2, mu1, mu2, beta12):
        return cls(a=np.array([a1, a2]),
                   beta=np.array([[mu1, beta12], [beta12, mu2]]))

    def with_beta(self, beta):
        return SystemParams(a=self.a.copy(), beta=np.asarray(beta, dtype=float))


def _values(u):
    return u.values if isinstance(u, RadialField) else np.asarray(u)


def _grid_of(fields):
    grids = {f.grid for f in fields if isinstance(f, RadialField)}
    if len(grids) != 1:
        raise GridMismatchError("fields must share one grid")
    return grids.pop()


def mass(u):
    """Discrete int_{R^3} |u|^2."""
    v = _values(u)
    return float(u.grid.weights @ np.abs(v) ** 2)


def kinetic(u, grid=None):
    """Discrete int_{R^3} |grad u|^2 = 4 pi int (u')^2 r^2 dr."""
    g = grid if grid is not None else u.grid
    du = g.d1 @ _values(u)
    return float(g.weights @ np.abs(du) ** 2)


def interaction(u, v):
    """Discrete int_{R^3} |u|^2 |v|^2; interaction(u, u) is int |u|^4."""
    if isinstance(u, RadialField) and isinstance(v, RadialField):
        if u.grid != v.grid:
            raise GridMismatchError("interaction requires a shared grid")
        g = u.grid
    else:
        g = u.grid if isinstance(u, RadialField) else v.grid
    return float(g.weights @ (np.abs(_values(u)) ** 2 * np.abs(_values(v)) ** 2))


def interaction_matrix(U):
    """Symmetric matrix of pairwise quartic interactions of the components."""
    k = len(U)
    grid = _grid_of(U)
    sq = np.array([np.abs(_values(u)) ** 2 for u in U])
    weighted = sq * grid.weights
    return weighted @ sq.T


def kinetic_and_coupling(U, params):
    """A = sum_i int |grad u_i|^2 and B = sum_{i,j} beta_ij int u_i^2 u_j^2.

    The double sum runs over all ordered pairs, so for k = 2 the cross term
    carries its factor 2.
    """
    if len(U) != params.k:
        raise ValueError("component count does not match params")
    grid = _grid_of(U)
    a_kin = sum(kinetic(u, grid) for u in U)
    b_coup = float(np.sum(params.beta * interaction_matrix(U)))
    return a_kin, b_coup


def energy(U, params):
    """Total energy: sum_i kinetic/2 - sum_{i,j} beta_ij interaction / 4."""
    a_kin, b_coup = kinetic_and_coupling(U, params)
    return 0.5 * a_kin - 0.25 * b_coup


def pohozaev(U, params):
    """The Pohozaev combination G = A - (3/4) B; zero at every solution."""
    a_kin, b_coup = kinetic_and_coupling(U, params)
    return a_kin - 0.75 * b_coup


def rayleigh_quotient(U, params):
    """Scale-invariant quotient 8 A^3 / (27 B^2); needs B > 0."""
    a_kin, b_coup = kinetic_and_coupling(U, params)
    if b_coup <= 0:
        raise DegenerateQuotientError(
            f"coupling integral B = {b_coup:g} is not positive")
    return 8.0 * a_kin**3 / (27.0 * b_coup**2)


def _origin_spline(u):
    """Clamped cubic spline of a radial field over [0, r_max]."""
    from scipy.interpolate import CubicSpline
    g = u.grid
    r = np.concatenate(([0.0], g.nodes))
    y = np.concatenate(([g.origin_value(u.values)], u.values))
    return CubicSpline(r, y, bc_type=((1, 0.0), "not-a-knot"))


def dilate(s, u, loss_tol=1e-7):
    """Mass-preserving radial dilation: samples of e^{3s/2} u(e^s r).

    Values requested beyond r_max are taken as zero.  Raises
    DilationRangeError when the truncated part would carry more than
    loss_tol of the field's mass (for s < 0 the loss is the mass of u
    beyond e^s * r_max, computed by quadrature; for s > 0 a tail bound
    based on |u(r_max)| is used).
    """
    g = u.grid
    if s == 0.0:
        return RadialField(g, u.values.copy())
    total = mass(u)
    if total > 0.0:
        if s < 0:
            cut = np.exp(s) * g.r_max
            lost = float(np.sum(g.weights[g.nodes > cut]
                                * u.values[g.nodes > cut] ** 2))
        else:
            lost = (4.0 * np.pi * g.r_max**2 * u.values[-1] ** 2
                    * (np.exp(s) - 1.0) * g.r_max)
        if lost > loss_tol * total:
            raise DilationRangeError(
                f"dilation s={s:g} would truncate a mass fraction "
                f"{lost / total:.3e} > {loss_tol:g}")
    spline = _origin_spline(u)
    arg = np.exp(s) * g.nodes
    inside = arg <= g.r_max
    out = np.zeros(g.n)
    out[inside] = spline(arg[inside])
    return RadialField(g, np.exp(1.5 * s) * out)


def energy_gradient(U, params):
    """L^2 gradient of the energy under the quadrature inner product.

    Returns g_i = -Delta u_i - (sum_j beta_ij u_j^2) u_i with the
    collocation Laplacian, so that <g_i, h> matches the directional
    derivative of energy() to the discretization order on smooth fields.
    """
    if len(U) != params.k:
        raise ValueError("component count does not match params")
    grid = _grid_of(U)
    lap = grid.laplacian
    sq = np.array([_values(u) ** 2 for u in U])
    q = params.beta @ sq
    return [RadialField(grid, lap @ _values(u) - q[i] * _values(u))
            for i, u in enumerate(U)]
