"""Potential theory on a Neumann rectangle.

The Green function G solves ``Delta G(.,eta) = delta_eta - 1/|Omega|`` with
vanishing normal derivative on the walls and ``int G(xi,.) = 0``.  For a
rectangle it is the sum of four image copies of the Green function of the
doubly-periodic torus obtained by even reflection, and the torus kernel has
a fast-converging product formula through the first Jacobi theta function.

On top of G sit the layer operations: single-layer potentials with
spectrally-accurate on-curve quadrature (periodic trapezoid plus the exact
circulant treatment of the log kernel), the normal-derivative jump, the
single-layer trace operator and its inverse, the Dirichlet-Neumann map.

Normalization convention: the plain single layer ``phi(xi) = int G(xi,eta)
h(eta) dS`` has normal-derivative jump (outside minus inside) equal to h.
Wherever a density is paired with the Dirichlet-Neumann operator (whose
circle eigenvalues are -k/R), the kernel 2G is used instead, so that the
operator pair (trace of the doubled layer, half the jump) is an exact
inverse pair.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

TWO_PI = 2.0 * np.pi


class IllConditionedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Green function of the rectangle
# ---------------------------------------------------------------------------

class GreenOperator:
    """Neumann Green function of the rectangle [0, lx] x [0, ly].

    Parameters
    ----------
    lx, ly : float
        Edge lengths.
    nterms : int
        Number of product-formula terms; 12 is far beyond double precision
        for aspect ratios near one.
    """

    def __init__(self, lx=1.0, ly=1.0, nterms=8):
        self.lx = float(lx)
        self.ly = float(ly)
        self.area = self.lx * self.ly
        self.nterms = int(nterms)
        # run the series along the axis with the wider period so q is small
        self._swap = self.ly < self.lx
        L, H = (self.lx, self.ly) if not self._swap else (self.ly, self.lx)
        self._L, self._H = L, H
        self.q = np.exp(-np.pi * H / L)
        q2n = self.q ** (2 * np.arange(1, self.nterms + 1))
        self._q2n = q2n[q2n > 1e-15]  # smaller factors are identity at double precision
        self.log_p = float(np.sum(np.log1p(-self._q2n)))
        # constant making every torus copy integrate to zero
        self._c_per = H / (24.0 * L) - self.log_p / TWO_PI
        self._prefactor = (np.log(2.0) + 0.25 * np.log(self.q) + self.log_p) / TWO_PI
        # regular part of the torus kernel at coincidence
        self._reg0 = (np.log(2.0 * self.q ** 0.25 * np.exp(self.log_p) ** 3
                             * np.pi / (2.0 * L))) / TWO_PI + self._c_per

    # -- torus kernel --------------------------------------------------------

    def _reduce(self, dx, dy):
        L, H = self._L, self._H
        dx = (dx + L) % (2.0 * L) - L
        dy = (dy + H) % (2.0 * H) - H
        return dx, dy

    def _torus(self, dx, dy):
        """Periodic kernel value at separation (dx, dy), reduced internally."""
        dx, dy = self._reduce(dx, dy)
        v = (np.pi / (2.0 * self._L)) * (dx + 1j * dy)
        f = np.sin(v)
        e2iv = np.exp(2j * v)
        e2iv_c = np.exp(-2j * v)
        for q2 in self._q2n:
            f = f * (1.0 - q2 * e2iv) * (1.0 - q2 * e2iv_c)
        with np.errstate(divide="ignore"):
            out = self._prefactor + np.log(np.abs(f)) / TWO_PI
        out = out - dy ** 2 / (8.0 * self._L * self._H) + self._c_per
        return out

    def _torus_grad(self, dx, dy):
        """Gradient of the torus kernel with respect to the first point."""
        dx, dy = self._reduce(dx, dy)
        a = np.pi / (2.0 * self._L)
        v = a * (dx + 1j * dy)
        psi = 1.0 / np.tan(v)
        e2iv = np.exp(2j * v)
        e2iv_c = np.exp(-2j * v)
        for q2 in self._q2n:
            psi = psi - 2j * q2 * e2iv / (1.0 - q2 * e2iv)
            psi = psi + 2j * q2 * e2iv_c / (1.0 - q2 * e2iv_c)
        fp = a * psi / TWO_PI
        gx = np.real(fp)
        gy = -np.imag(fp) - dy / (4.0 * self._L * self._H)
        return gx, gy

    def _images(self, xi, eta):
        """Separations (dx_i, dy_i) for the four even reflections of eta."""
        if self._swap:
            x1, y1 = xi[..., 1], xi[..., 0]
            x2, y2 = eta[..., 1], eta[..., 0]
        else:
            x1, y1 = xi[..., 0], xi[..., 1]
            x2, y2 = eta[..., 0], eta[..., 1]
        return ((x1 - x2, y1 - y2), (x1 + x2, y1 - y2),
                (x1 - x2, y1 + y2), (x1 + x2, y1 + y2))

    # -- public evaluation -----------------------------------------------------

    def green(self, xi, eta):
        """G(xi, eta); shapes broadcast. Singular at coincidence."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if xi.shape == eta.shape and np.array_equal(xi, eta):
            raise ValueError("Green function evaluated at coincident points")
        total = 0.0
        for dx, dy in self._images(xi, eta):
            total = total + self._torus(dx, dy)
        return total

    def green_matrix(self, xi, eta):
        """Matrix G(xi_i, eta_j) for point sets of shape (m, 2), (n, 2)."""
        xi = np.asarray(xi, dtype=float)[:, None, :]
        eta = np.asarray(eta, dtype=float)[None, :, :]
        total = 0.0
        for dx, dy in self._images(xi, eta):
            total = total + self._torus(dx, dy)
        return total

    def gradient(self, xi, eta):
        """grad_xi G(xi, eta), shape (..., 2)."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        gx = 0.0
        gy = 0.0
        for dx, dy in self._images(xi, eta):
            tx, ty = self._torus_grad(dx, dy)
            gx = gx + tx
            gy = gy + ty
        if self._swap:
            gx, gy = gy, gx
        return np.stack([gx, gy], axis=-1)

    def gradient_matrix(self, xi, eta):
        return self.gradient(np.asarray(xi, dtype=float)[:, None, :],
                             np.asarray(eta, dtype=float)[None, :, :])

    def smooth_matrix(self, xi, eta):
        """G minus the free-space log of the principal separation.

        Valid for interior point sets whose principal separation never wraps;
        coincident pairs get the analytic diagonal limit.
        """
        xi = np.asarray(xi, dtype=float)[:, None, :]
        eta = np.asarray(eta, dtype=float)[None, :, :]
        pairs = self._images(xi, eta)
        total = 0.0
        for dx, dy in pairs[1:]:
            total = total + self._torus(dx, dy)
        dx, dy = pairs[0]
        r = np.hypot(dx, dy)
        principal = np.where(r > 0.0, self._principal_reg(dx, dy, r), self._reg0)
        return total + principal

    def _principal_reg(self, dx, dy, r):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self._torus(dx, dy) - np.log(np.where(r > 0, r, 1.0)) / TWO_PI
        return val

    def log_rect_integral(self, xi):
        """Closed form of ``int_Omega log|xi - eta| d eta / (2 pi)``."""
        x, y = float(xi[0]), float(xi[1])

        def F(u, v):
            r = np.hypot(u, v)
            if r == 0.0:
                return 0.0
            t1 = u * v * (np.log(r) - 1.5)
            t2 = 0.5 * u * u * np.arctan(v / u) if u != 0 else 0.0
            t3 = 0.5 * v * v * np.arctan(u / v) if v != 0 else 0.0
            return t1 + t2 + t3

        u1, u2 = 0.0 - x, self.lx - x
        v1, v2 = 0.0 - y, self.ly - y
        val = F(u2, v2) - F(u1, v2) - F(u2, v1) + F(u1, v1)
        return val / TWO_PI


# ---------------------------------------------------------------------------
# layer densities and quadrature
# ---------------------------------------------------------------------------

class LayerDensity:
    """Samples of a density (or boundary values) at the markers of a curve."""

    def __init__(self, curve, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (curve.n,):
            raise ValueError("density must have one value per marker")
        self.curve = curve
        self.values = values

    def curve_mean(self):
        w = self.curve.arclength_weights()
        return float(np.sum(w * self.values) / np.sum(w))

    def curve_integral(self):
        return float(np.sum(self.curve.arclength_weights() * self.values))


def _log_circulant(n):
    """Matrix applying f -> int log(4 sin^2((t-s)/2)) f(s) ds spectrally."""
    mult = np.zeros(n // 2 + 1)
    mult[1:] = -TWO_PI / np.arange(1, n // 2 + 1)
    eye = np.eye(n)
    return np.fft.irfft(np.fft.rfft(eye, axis=0) * mult[:, None], n, axis=0)


_LOG_CIRC_CACHE = {}


def log_circulant(n):
    if n not in _LOG_CIRC_CACHE:
        _LOG_CIRC_CACHE[n] = _log_circulant(n)
    return _LOG_CIRC_CACHE[n]


class CurvePotentials:
    """Precomputed on-curve quadrature operators for one curve.

    Builds the matrix of the plain single-layer trace (Kress log-splitting),
    the trace operator ``S`` of the doubled layer with its curve-mean removed,
    and a factorization of the bordered system realizing the
    Dirichlet-Neumann map ``T = S^{-1}`` on mean-zero data.
    """

    def __init__(self, op, curve, filter_frac=None):
        self.op = op
        self.curve = curve
        self.filter_frac = filter_frac
        n = curve.n
        t = curve.thetas
        pts = curve.points
        speed = curve.speed()
        self.weights = speed * TWO_PI / n
        self.total_length = float(self.weights.sum())

        # smooth part of the kernel in parameter space
        diff = pts[:, None, :] - pts[None, :, :]
        r = np.hypot(diff[..., 0], diff[..., 1])
        dt = t[:, None] - t[None, :]
        s2 = 4.0 * np.sin(0.5 * dt) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r > 0, r ** 2 / np.where(s2 > 0, s2, 1.0), 1.0)
        k2 = np.log(ratio) / (2.0 * TWO_PI)
        np.fill_diagonal(k2, np.log(speed) / TWO_PI)
        k2 = k2 + op.smooth_matrix(pts, pts)

        circ = log_circulant(n)
        # (trace of plain single layer) as a matrix on nodal density values
        self.trace_matrix = (circ / (2.0 * TWO_PI) + k2 * (TWO_PI / n)) * speed[None, :]

        proj = np.outer(np.ones(n), self.weights) / self.total_length
        self.s_matrix = 2.0 * (self.trace_matrix - proj @ self.trace_matrix)

        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = self.s_matrix
        bordered[:n, n] = 1.0
        bordered[n, :n] = self.weights
        self._lu = lu_factor(bordered)
        diag = np.abs(np.diag(self._lu[0]))
        self.condition_estimate = float(diag.max() / max(diag.min(), 1e-300))

    def single_layer_trace(self, values):
        """On-curve values of the plain single layer of the given density."""
        return self.trace_matrix @ np.asarray(values, dtype=float)

    def apply_s(self, values):
        """Trace of the doubled single layer, minus its curve mean."""
        return self.s_matrix @ np.asarray(values, dtype=float)

    def solve_t(self, g, max_condition=1e13):
        """Density h with S h = g - mean(g) and zero curve mean.

        This realizes the Dirichlet-Neumann operator: h is half the
        normal-derivative jump of the two-sided harmonic extension of g.
        """
        if self.condition_estimate > max_condition:
            raise IllConditionedError(
                f"first-kind solve too ill-conditioned "
                f"(estimate {self.condition_estimate:.3e})")
        g = np.asarray(g, dtype=float)
        rhs = np.concatenate([g - np.sum(self.weights * g) / self.total_length,
                              [0.0]])
        sol = lu_solve(self._lu, rhs)
        h = sol[:-1]
        if self.filter_frac is not None:
            h = _fourier_filter(h, self.filter_frac)
            h = h - np.sum(self.weights * h) / self.total_length
        return h

    def curve_mean(self, values):
        return float(np.sum(self.weights * values) / self.total_length)


def _fourier_filter(values, frac):
    c = np.fft.rfft(values)
    cut = int(frac * len(c))
    c[cut:] = 0.0
    return np.fft.irfft(c, len(values))


def workspace(op, curve, filter_frac=None):
    """CurvePotentials for (op, curve), cached on the immutable curve."""
    cache = getattr(curve, "_potential_workspaces", None)
    if cache is None:
        cache = {}
        curve._potential_workspaces = cache
    key = (id(op), filter_frac)
    if key not in cache:
        cache[key] = CurvePotentials(op, curve, filter_frac)
    return cache[key]


# ---------------------------------------------------------------------------
# single layer potential
# ---------------------------------------------------------------------------

class SingleLayerPotential:
    """Evaluator of the plain single layer ``int G(., eta) h(eta) dS``.

    Off-curve evaluation upsamples the quadrature when the target comes
    within a few marker spacings of the curve.
    """

    def __init__(self, op, density, near_factor=5.0, max_upsample=16):
        self.op = op
        self.curve = density.curve
        self.values = density.values
        self.near_factor = near_factor
        self.max_upsample = max_upsample
        self._fine = {}

    def _quad_nodes(self, upsample):
        if upsample not in self._fine:
            c = self.curve
            m = upsample * c.n
            th = TWO_PI * np.arange(m) / m
            pts = c.eval(th)
            speed = np.linalg.norm(c.eval(th, 1), axis=-1)
            vals = _trig_resample(self.values, m)
            self._fine[upsample] = (pts, vals * speed * TWO_PI / m)
        return self._fine[upsample]

    def at(self, pts, upsample=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ups = upsample or self._pick_upsample(pts)
        nodes, charges = self._quad_nodes(ups)
        out = np.empty(pts.shape[0])
        chunk = max(1, 2 ** 22 // max(nodes.shape[0], 1))
        for lo in range(0, pts.shape[0], chunk):
            block = self.op.green_matrix(pts[lo:lo + chunk], nodes)
            out[lo:lo + chunk] = block @ charges
        return out

    def gradient(self, pts, upsample=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ups = upsample or self._pick_upsample(pts)
        nodes, charges = self._quad_nodes(ups)
        out = np.empty((pts.shape[0], 2))
        chunk = max(1, 2 ** 21 // max(nodes.shape[0], 1))
        for lo in range(0, pts.shape[0], chunk):
            block = self.op.gradient_matrix(pts[lo:lo + chunk], nodes)
            out[lo:lo + chunk] = np.einsum("ijk,j->ik", block, charges)
        return out

    def _pick_upsample(self, pts):
        spacing = self.curve.arc_length() / self.curve.n
        tc = self.curve.signed_distance(pts)
        dist = np.abs(tc.d).min() if tc.d.size else np.inf
        if dist >= self.near_factor * spacing:
            return 2
        need = self.near_factor * spacing / max(dist, 1e-12)
        return int(min(self.max_upsample, max(2, 2 ** int(np.ceil(np.log2(need))))))

    def on_curve(self):
        """Spectrally-accurate values on the curve itself."""
        ws = workspace(self.op, self.curve)
        return ws.single_layer_trace(self.values)

    def total_charge(self):
        return float(np.sum(self.curve.arclength_weights() * self.values))


def _trig_resample(values, m):
    n = len(values)
    c = np.fft.rfft(values)
    out = np.zeros(m // 2 + 1, dtype=complex)
    out[:len(c)] = c
    if n % 2 == 0 and m > n:
        out[n // 2] *= 0.5  # split the Nyquist mode symmetrically
    return np.fft.irfft(out, m) * (m / n)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def green(op, xi, eta):
    return op.green(xi, eta)


def volume_potential(op, field):
    """Field v with Delta v = f - mean(f), Neumann walls, zero mean."""
    if abs(field.lx - op.lx) > 1e-12 or abs(field.ly - op.ly) > 1e-12:
        raise ValueError("field domain does not match the Green operator")
    return field.solve_poisson_neumann()


def single_layer(op, density, **kw):
    return SingleLayerPotential(op, density, **kw)


def neumann_jump(op, density, offset_factor=1.0):
    """Normal-derivative jump of the single layer, recovered numerically.

    One-sided normal derivatives are measured at offsets (1, 2, 3, 4) times
    ``offset_factor`` marker spacings and Richardson-extrapolated to the
    curve; the jump of the plain single layer recovers the density, i.e.
    this is the inverse of the density -> potential map in the normal
    direction.
    """
    curve = density.curve
    pot = SingleLayerPotential(op, density)
    spacing = curve.arc_length() / curve.n
    delta = offset_factor * spacing
    nrm = curve.normal()
    pts = curve.points

    def one_sided(side):
        coeffs = (4.0, -6.0, 4.0, -1.0)
        total = 0.0
        for c, mult in zip(coeffs, (1.0, 2.0, 3.0, 4.0)):
            q = pts + side * mult * delta * nrm
            grad = pot.gradient(q, upsample=8)
            total = total + c * np.einsum("ij,ij->i", grad, nrm)
        return total

    return one_sided(+1.0) - one_sided(-1.0)


def dn_inverse(op, density, mean_tol=1e-8):
    """Trace operator S applied to a mean-zero density (doubled layer).

    Returns boundary values with zero curve mean; S is the inverse of the
    Dirichlet-Neumann map.
    """
    mean = density.curve_mean()
    scale = max(np.abs(density.values).max(), 1e-300)
    if abs(mean) > mean_tol * scale:
        raise ValueError(f"dn_inverse needs a mean-zero density, mean={mean:.3e}")
    ws = workspace(op, density.curve)
    return ws.apply_s(density.values)


def dirichlet_neumann(op, boundary_values, filter_frac=2.0 / 3.0):
    """Dirichlet-Neumann map: mean-zero density h with S h = g - mean(g).

    h is half the normal-derivative jump across the curve of the harmonic
    field matching g on the curve (and Neumann walls); for a circle of
    radius R in free space the eigenvalue on cos(k theta) is -k/R.
    """
    ws = workspace(op, boundary_values.curve, filter_frac)
    h = ws.solve_t(boundary_values.values)
    return LayerDensity(boundary_values.curve, h)


def harmonic_extension_neumann(op, density):
    """Harmonic field (doubled layer) with jump data 2*density, zero curve mean."""
    mean = density.curve_mean()
    scale = max(np.abs(density.values).max(), 1e-300)
    if abs(mean) > 1e-8 * scale:
        raise ValueError("Neumann extension needs a mean-zero density")
    pot = SingleLayerPotential(op, density)
    ws = workspace(op, density.curve)
    shift = ws.curve_mean(ws.single_layer_trace(density.values))

    def field(pts):
        return 2.0 * (pot.at(pts) - shift)

    field.on_curve = lambda: 2.0 * (ws.single_layer_trace(density.values) - shift)
    return field


def harmonic_extension_dirichlet(op, boundary_values):
    """Harmonic field matching the boundary values on the curve."""
    g = boundary_values.values
    curve = boundary_values.curve
    ws = workspace(op, curve)
    gmean = ws.curve_mean(g)
    h = dirichlet_neumann(op, boundary_values)
    base = harmonic_extension_neumann(op, h)

    def field(pts):
        return base(pts) + gmean

    field.on_curve = lambda: base.on_curve() + gmean
    return field
