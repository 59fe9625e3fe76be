"""One-dimensional transition-profile layer.

The standing wave ``tanh(z/sqrt(2))`` solving ``-m'' + m^3 - m = 0``, the
smooth cutoff used to glue it to the pure phases, the linearized operator
``L w = -w'' + (3 m^2 - 1) w`` with its Fredholm solvability machinery, and
the surface-tension constant ``S = (1/4) int (m')^2 dz``.

Profiles live on a uniform symmetric grid over [-z_max, z_max] with an odd
number of nodes so that z = 0 is a grid point.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

SQRT2 = np.sqrt(2.0)


class NumericalError(RuntimeError):
    """Raised when a discrete solve is unusable (with a condition report)."""


# ---------------------------------------------------------------------------
# pointwise profile functions
# ---------------------------------------------------------------------------

def double_well_force(m):
    """f(m) = m^3 - m, the derivative of the quartic double-well potential."""
    m = np.asarray(m)
    return m ** 3 - m


def double_well_force_deriv(m):
    m = np.asarray(m)
    return 3.0 * m ** 2 - 1.0


def profile(z):
    """Standing-wave transition profile tanh(z/sqrt(2))."""
    return np.tanh(np.asarray(z, dtype=float) / SQRT2)


def profile_deriv(z):
    z = np.asarray(z, dtype=float)
    return (1.0 / SQRT2) / np.cosh(z / SQRT2) ** 2


def profile_deriv2(z):
    """Second derivative; equals f(profile) by the profile ODE."""
    return double_well_force(profile(z))


def _bump_edge(x):
    """exp(-1/x) for x > 0, else 0 (the C-infinity mollifier edge)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def _bump_edge_deriv(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, strictly monotone between."""
    a = _bump_edge(x)
    b = _bump_edge(1.0 - x)
    return a / (a + b + (a + b == 0.0))


def _smoothstep_deriv(x):
    a = _bump_edge(x)
    b = _bump_edge(1.0 - x)
    da = _bump_edge_deriv(x)
    db = _bump_edge_deriv(1.0 - x)
    denom = (a + b) ** 2
    denom = np.where(denom == 0.0, 1.0, denom)
    return (da * b + a * db) / denom


def cutoff(u):
    """Smooth even unimodal cutoff: 1 on |u| <= 1/2, 0 on |u| >= 1."""
    u = np.abs(np.asarray(u, dtype=float))
    return _smoothstep(2.0 * (1.0 - u))


def cutoff_deriv(u):
    u = np.asarray(u, dtype=float)
    return _smoothstep_deriv(2.0 * (1.0 - np.abs(u))) * (-2.0 * np.sign(u))


def glued_profile(z, eps, eps0):
    """Transition profile glued to exact +/-1 outside |z| = eps0/eps.

    Equals the tanh profile for |z| <= eps0/(2 eps) and sign(z) for
    |z| >= eps0/eps, with a smooth blend between.
    """
    _check_eps(eps, eps0)
    z = np.asarray(z, dtype=float)
    r = cutoff(eps * z / eps0)
    return r * profile(z) + (1.0 - r) * np.sign(z)


def glued_profile_deriv(z, eps, eps0):
    _check_eps(eps, eps0)
    z = np.asarray(z, dtype=float)
    u = eps * z / eps0
    r = cutoff(u)
    dr = cutoff_deriv(u) * (eps / eps0)
    return r * profile_deriv(z) + dr * (profile(z) - np.sign(z))


def _check_eps(eps, eps0):
    if not (0.0 < eps <= eps0):
        raise ValueError(f"need 0 < eps <= eps0, got eps={eps}, eps0={eps0}")


# ---------------------------------------------------------------------------
# profiles on the truncated grid
# ---------------------------------------------------------------------------

class Profile1D:
    """Real-valued function sampled on a uniform symmetric grid.

    Parameters
    ----------
    values : ndarray, shape (n_points,)
    z_max : float
        Truncation half-width; the grid covers [-z_max, z_max].
    """

    def __init__(self, values, z_max=10.0):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be 1-D")
        n = values.size
        if n < 3 or n % 2 == 0:
            raise ValueError("n_points must be odd and >= 3")
        if z_max <= 0:
            raise ValueError("z_max must be positive")
        self.values = values
        self.z_max = float(z_max)
        self.n_points = n

    @property
    def z(self):
        return np.linspace(-self.z_max, self.z_max, self.n_points)

    @property
    def h(self):
        return 2.0 * self.z_max / (self.n_points - 1)

    @property
    def i0(self):
        """Index of the z = 0 node."""
        return (self.n_points - 1) // 2

    @classmethod
    def from_function(cls, fn, z_max=10.0, n_points=2001):
        z = np.linspace(-z_max, z_max, n_points)
        return cls(fn(z), z_max)

    def copy(self):
        return Profile1D(self.values.copy(), self.z_max)

    def integral(self):
        """Trapezoid quadrature over the grid."""
        return float(np.trapz(self.values, dx=self.h))


def standard_grid(z_max=10.0, n_points=2001):
    return np.linspace(-z_max, z_max, n_points)


def profile_ode_residual(p):
    """Sup over interior nodes of |-D2 p + p^3 - p| (centered differences)."""
    w = p.values
    h = p.h
    d2 = (w[:-2] - 2.0 * w[1:-1] + w[2:]) / h ** 2
    res = -d2 + double_well_force(w[1:-1])
    return float(np.abs(res).max())


@lru_cache(maxsize=8)
def surface_tension(z_max=10.0, n_points=2001):
    """Quadrature of (1/4) int (m')^2 dz over the truncated grid (cached)."""
    z = standard_grid(z_max, n_points)
    md = profile_deriv(z)
    return float(np.trapz(0.25 * md ** 2, z))


SURFACE_TENSION_EXACT = SQRT2 / 6.0  # analytic value of the quadrature above


# ---------------------------------------------------------------------------
# linearized operator
# ---------------------------------------------------------------------------

def apply_L(w):
    """Apply L = -D2 + (3 m^2 - 1) with centered differences.

    Boundary nodes use one-sided second-order stencils; those two entries are
    lower-accuracy than the interior.
    """
    v = w.values
    h = w.h
    pot = double_well_force_deriv(profile(w.z))
    out = np.empty_like(v)
    out[1:-1] = -(v[:-2] - 2.0 * v[1:-1] + v[2:]) / h ** 2
    out[0] = -(2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h ** 2
    out[-1] = -(2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h ** 2
    out += pot * v
    return Profile1D(out, w.z_max)


class SolvabilityReport:
    """Result of a Fredholm solve of L w = A.

    Attributes
    ----------
    defect : float
        Raw kernel pairing ``int A m' dz`` before correction.
    alpha : float
        Coefficient of the m' correction subtracted from A.
    solution : Profile1D
        Solution with w(0) = 0 and homogeneous Dirichlet ends.
    """

    def __init__(self, defect, alpha, solution):
        self.defect = defect
        self.alpha = alpha
        self.solution = solution


def solve_L(a, decay_tol=1e-6):
    """Solve L w = A - alpha m' with w(0) = 0 and decay at the grid ends.

    The kernel direction m' is projected out of A (alpha is its coefficient),
    the corrected system is solved with the kernel constrained out through a
    bordered (Lagrange-multiplier) row, and the unique kernel multiple making
    w(0) = 0 is added back.
    """
    v = a.values
    z = a.z
    h = a.h
    n = a.n_points
    md = profile_deriv(z)

    amax = np.abs(v).max()
    if amax > 0 and max(abs(v[0]), abs(v[-1])) > decay_tol * amax:
        warnings.warn(
            "right-hand side does not decay at the grid ends; "
            "truncation may pollute the solution",
            stacklevel=2,
        )

    wq = np.full(n, h)
    wq[0] = wq[-1] = 0.5 * h  # trapezoid weights
    defect = float(np.sum(wq * v * md))
    norm = float(np.sum(wq * md * md))
    alpha = defect / norm
    rhs = v - alpha * md

    pot = double_well_force_deriv(profile(z))
    main = np.full(n, 2.0 / h ** 2) + pot
    off = np.full(n - 1, -1.0 / h ** 2)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    # Dirichlet rows at the two ends
    lap[0, :] = 0.0
    lap[0, 0] = 1.0
    lap[-1, :] = 0.0
    lap[-1, -1] = 1.0
    rhs_full = rhs.copy()
    rhs_full[0] = 0.0
    rhs_full[-1] = 0.0

    # bordered system [[L, k], [k^T, 0]] removes the near-null direction
    k = (wq * md).reshape(-1, 1)
    top = sp.hstack([sp.csr_matrix(lap), sp.csr_matrix(md.reshape(-1, 1))])
    bottom = sp.hstack([sp.csr_matrix(k.T), sp.csr_matrix((1, 1))])
    system = sp.vstack([top, bottom]).tocsc()
    b = np.concatenate([rhs_full, [0.0]])

    sol = spsolve(system, b)
    if not np.all(np.isfinite(sol)):
        raise NumericalError(
            "bordered profile solve produced non-finite values; "
            f"estimated 1-norm condition {_cond_estimate(system):.3e}"
        )
    w = sol[:n]

    # shift by the kernel multiple that pins w(0) = 0 (m'(0) = 1/sqrt(2) != 0)
    i0 = a.i0
    w = w - (w[i0] / md[i0]) * md
    w[i0] = 0.0
    return SolvabilityReport(defect, alpha, Profile1D(w, a.z_max))


def _cond_estimate(system):
    try:
        from scipy.sparse.linalg import onenormest, inv
        return onenormest(system) * onenormest(inv(system.tocsc()))
    except Exception:
        return float("nan")
