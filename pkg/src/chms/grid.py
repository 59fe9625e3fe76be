"""Cell-centered scalar fields on a rectangle with cosine-spectral calculus.

All fields live on a uniform cell-centered grid over [0, Lx] x [0, Ly] and
are manipulated through their DCT-II (Neumann-compatible) cosine series.
Every linear operation here (Laplacian, Poisson solve, derivatives,
quadrature) acts on that series, so homogeneous Neumann boundary conditions
hold exactly in the chosen basis.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn, idst, idct


class ScalarField2D:
    """Scalar field sampled at cell centers of a rectangular grid.

    Parameters
    ----------
    data : ndarray, shape (nx, ny)
        Samples at ``x_i = (i + 1/2) Lx/nx``, ``y_j = (j + 1/2) Ly/ny``.
        First axis is x, second is y.
    lx, ly : float
        Domain edge lengths.
    """

    def __init__(self, data, lx=1.0, ly=1.0):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("data must be 2-D (nx, ny)")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite values")
        self.data = data
        self.nx, self.ny = data.shape
        self.lx = float(lx)
        self.ly = float(ly)
        self._coeffs = None

    # -- basic constructors ------------------------------------------------

    @classmethod
    def zeros(cls, nx, ny, lx=1.0, ly=1.0):
        return cls(np.zeros((nx, ny)), lx, ly)

    @classmethod
    def from_function(cls, fn, nx, ny, lx=1.0, ly=1.0):
        """Sample ``fn(x, y)`` (vectorized) at cell centers."""
        x, y = cell_centers(nx, ny, lx, ly)
        return cls(fn(x[:, None], y[None, :]), lx, ly)

    @classmethod
    def from_coeffs(cls, coeffs, lx=1.0, ly=1.0):
        nx, ny = coeffs.shape
        field = cls(np.zeros((nx, ny)), lx, ly)
        field.data = field._synthesize(coeffs)
        field._coeffs = np.array(coeffs, dtype=float)
        return field

    # -- spectral plumbing -------------------------------------------------

    @property
    def coeffs(self):
        """Cosine coefficients C with field = sum C[k,l] cos(k pi x/Lx) cos(l pi y/Ly)."""
        if self._coeffs is None:
            c = dctn(self.data, type=2) / (2.0 * self.nx * self.ny)
            c[0, :] *= 0.5
            c[:, 0] *= 0.5
            c *= 2.0  # c[k,l] now multiplies the plain cosine product
            self._coeffs = c
        return self._coeffs

    def _synthesize(self, coeffs):
        f = np.array(coeffs, dtype=float) * (self.nx * self.ny)
        f[0, :] *= 2.0
        f[:, 0] *= 2.0
        return idctn(f, type=2)

    def _like(self, data):
        return ScalarField2D(data, self.lx, self.ly)

    def _wavenumbers(self):
        kx = np.arange(self.nx) * np.pi / self.lx
        ky = np.arange(self.ny) * np.pi / self.ly
        return kx, ky

    # -- calculus ----------------------------------------------------------

    def laplacian(self):
        kx, ky = self._wavenumbers()
        lam = kx[:, None] ** 2 + ky[None, :] ** 2
        return ScalarField2D.from_coeffs(-lam * self.coeffs, self.lx, self.ly)

    def solve_poisson_neumann(self):
        """Zero-mean v with Delta v = self - mean(self) and dv/dn = 0 on walls."""
        kx, ky = self._wavenumbers()
        lam = kx[:, None] ** 2 + ky[None, :] ** 2
        lam[0, 0] = 1.0
        c = -self.coeffs / lam
        c[0, 0] = 0.0
        return ScalarField2D.from_coeffs(c, self.lx, self.ly)

    def deriv_x(self):
        """d/dx at cell centers (sine synthesis of the differentiated series)."""
        c = self.coeffs
        kx, _ = self._wavenumbers()
        b = -c * kx[:, None]  # coefficients of sin(k pi x/Lx) cos(l pi y/Ly)
        vals = _sine_synth(b[1:, :], axis=0, n=self.nx)
        return self._like(_cosine_synth(vals, axis=1, n=self.ny))

    def deriv_y(self):
        c = self.coeffs
        _, ky = self._wavenumbers()
        b = -c * ky[None, :]
        vals = _sine_synth(b[:, 1:], axis=1, n=self.ny)
        return self._like(_cosine_synth(vals, axis=0, n=self.nx))

    # -- quadrature --------------------------------------------------------

    @property
    def cell_area(self):
        return (self.lx / self.nx) * (self.ly / self.ny)

    def integral(self):
        """Domain integral (midpoint rule; exact for the cosine interpolant)."""
        return float(self.data.sum() * self.cell_area)

    def mean(self):
        return float(self.data.mean())

    def l2_sq(self):
        """Integral of field^2 via Parseval on the cosine series."""
        c = self.coeffs
        w = np.full(c.shape, 0.25)
        w[0, :] *= 2.0
        w[:, 0] *= 2.0
        return float((c ** 2 * w).sum() * self.lx * self.ly)

    def grad_sq_integral(self):
        """Integral of |grad field|^2 via Parseval (exact for the interpolant)."""
        c = self.coeffs
        kx, ky = self._wavenumbers()
        wx = np.full(self.nx, 0.5)
        wy = np.full(self.ny, 0.5)
        w0x = np.full(self.nx, 0.5)
        w0x[0] = 1.0
        w0y = np.full(self.ny, 0.5)
        w0y[0] = 1.0
        ix = (c * kx[:, None]) ** 2 * wx[:, None] * w0y[None, :]
        iy = (c * ky[None, :]) ** 2 * w0x[:, None] * wy[None, :]
        return float((ix + iy).sum() * self.lx * self.ly)

    # -- point evaluation --------------------------------------------------

    def eval_at(self, pts, truncate=None):
        """Evaluate the cosine series at arbitrary points.

        Parameters
        ----------
        pts : ndarray, shape (n, 2)
        truncate : int, optional
            Use only the first `truncate` modes per axis.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c = self.coeffs
        if truncate is not None:
            c = c[:truncate, :truncate]
        kx = np.arange(c.shape[0]) * np.pi / self.lx
        ky = np.arange(c.shape[1]) * np.pi / self.ly
        cosx = np.cos(pts[:, 0:1] * kx[None, :])
        cosy = np.cos(pts[:, 1:2] * ky[None, :])
        return np.einsum("pk,kl,pl->p", cosx, c, cosy, optimize=True)

    def band_limit(self, frac):
        """Zero all modes with index above ``frac`` of the per-axis maximum."""
        c = self.coeffs.copy()
        kcut = int(frac * self.nx)
        lcut = int(frac * self.ny)
        c[kcut:, :] = 0.0
        c[:, lcut:] = 0.0
        return ScalarField2D.from_coeffs(c, self.lx, self.ly)

    def spectral_tail_fraction(self, frac=0.75):
        """Coefficient mass above ``frac`` Nyquist, relative to the total."""
        c = self.coeffs
        kcut = int(frac * self.nx)
        lcut = int(frac * self.ny)
        total = np.abs(c).sum()
        if total == 0.0:
            return 0.0
        tail = np.abs(c[kcut:, :]).sum() + np.abs(c[:kcut, lcut:]).sum()
        return float(tail / total)

    # -- arithmetic helpers --------------------------------------------------

    def copy(self):
        return self._like(self.data.copy())

    def __add__(self, other):
        return self._like(self.data + _raw(other))

    def __radd__(self, other):
        return self._like(_raw(other) + self.data)

    def __sub__(self, other):
        return self._like(self.data - _raw(other))

    def __rsub__(self, other):
        return self._like(_raw(other) - self.data)

    def __mul__(self, other):
        return self._like(self.data * _raw(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.data)


def _raw(other):
    return other.data if isinstance(other, ScalarField2D) else other


def cell_centers(nx, ny, lx=1.0, ly=1.0):
    x = (np.arange(nx) + 0.5) * (lx / nx)
    y = (np.arange(ny) + 0.5) * (ly / ny)
    return x, y


def meshgrid_points(nx, ny, lx=1.0, ly=1.0):
    """All cell centers as an (nx*ny, 2) array, x-major."""
    x, y = cell_centers(nx, ny, lx, ly)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _sine_synth(b, axis, n):
    """Values of sum_m b[m] sin((m+1) pi x/L) at the n cell centers along ``axis``.

    ``b`` holds coefficients for modes 1 .. b.shape[axis]; modes above are zero.
    """
    shape = list(b.shape)
    nmodes = shape[axis]
    pad_shape = shape.copy()
    pad_shape[axis] = n
    full = np.zeros(pad_shape)
    sl = [slice(None)] * b.ndim
    sl[axis] = slice(0, nmodes)
    full[tuple(sl)] = b
    # dst(v, type=2)[k] = n * b_{k+1} for the target v, so invert with idst.
    return idst(full * n, type=2, axis=axis)


def _cosine_synth(c, axis, n):
    """Values of sum_k c[k] cos(k pi x/L) at the n cell centers along ``axis``."""
    f = np.array(c, dtype=float) * n
    sl = [slice(None)] * c.ndim
    sl[axis] = slice(0, 1)
    f[tuple(sl)] *= 2.0
    return idct(f, type=2, axis=axis)
