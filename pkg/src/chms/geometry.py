"""Closed-curve geometry on marker points with trigonometric interpolation.

A curve is a list of markers, uniformly indexed in a periodic parameter
``theta in [0, 2 pi)``, interpolated spectrally.  Everything downstream
(curvature, arc length, signed distance, normal-velocity evolution) is built
from that interpolant, so all geometric quantities converge spectrally for
analytic curves.

Sign conventions used throughout the package:

* curves are positively oriented (counterclockwise); construction reverses
  the marker order if needed;
* the signed distance d is negative inside the curve;
* the unit normal points outward (away from the enclosed region);
* the curvature of a counterclockwise circle is +1/R.
"""

from __future__ import annotations

import csv
import json

import numpy as np
from scipy.spatial import cKDTree


class CurveError(ValueError):
    pass


class SelfIntersectionError(CurveError):
    pass


class LifetimeExceeded(RuntimeError):
    """Raised when the flow leaves the configured curvature/clearance window."""


class TubularCoords:
    """Local coordinates of points relative to a curve.

    Attributes
    ----------
    d : ndarray
        Signed distance, negative inside.
    s : ndarray
        Parameter (theta) of the closest curve point.
    valid : ndarray of bool
        True where |d| <= eps0 (the tubular neighborhood half-width).
    converged : ndarray of bool
        False where the Newton projection fell back to a sampled minimum.
    """

    def __init__(self, d, s, valid, converged):
        self.d = d
        self.s = s
        self.valid = valid
        self.converged = converged


class Curve:
    """Smooth simple closed curve through uniformly-indexed markers.

    Parameters
    ----------
    points : ndarray, shape (n, 2)
        Marker positions, one per uniform parameter value 2 pi j / n.
    domain : pair of pairs
        Bounding rectangle ((x0, x1), (y0, y1)) the curve must stay inside.
    check : bool
        Run the simplicity (segment-intersection) scan at construction.
    """

    def __init__(self, points, domain=((0.0, 1.0), (0.0, 1.0)), check=True):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
            raise CurveError("need an (n, 2) marker array with n >= 8")
        if not np.all(np.isfinite(pts)):
            raise CurveError("markers contain non-finite values")
        if _polygon_area(pts) < 0.0:
            pts = pts[::-1].copy()
        self.points = pts
        self.n = pts.shape[0]
        self.domain = tuple((float(a), float(b)) for a, b in domain)
        self._cx = np.fft.rfft(pts[:, 0]) / self.n
        self._cy = np.fft.rfft(pts[:, 1]) / self.n
        if check:
            if _self_intersects(pts):
                raise SelfIntersectionError("curve markers self-intersect")
            (x0, x1), (y0, y1) = self.domain
            if (pts[:, 0].min() <= x0 or pts[:, 0].max() >= x1
                    or pts[:, 1].min() <= y0 or pts[:, 1].max() >= y1):
                raise CurveError("curve touches or leaves the domain")

    # -- spectral evaluation -------------------------------------------------

    @property
    def thetas(self):
        return 2.0 * np.pi * np.arange(self.n) / self.n

    def eval(self, theta, order=0):
        """Interpolated positions (order 0) or parameter derivatives."""
        theta = np.asarray(theta, dtype=float)
        x = _eval_series(self._cx, theta, order, self.n)
        y = _eval_series(self._cy, theta, order, self.n)
        return np.stack([x, y], axis=-1)

    def deriv_at_markers(self, order=1):
        x = _deriv_markers(self._cx, order, self.n)
        y = _deriv_markers(self._cy, order, self.n)
        return np.stack([x, y], axis=-1)

    def tangent(self, theta=None):
        d1 = self.deriv_at_markers(1) if theta is None else self.eval(theta, 1)
        return d1 / np.linalg.norm(d1, axis=-1, keepdims=True)

    def normal(self, theta=None):
        """Outward unit normal (counterclockwise curve)."""
        t = self.tangent(theta)
        return np.stack([t[..., 1], -t[..., 0]], axis=-1)

    def speed(self, theta=None):
        d1 = self.deriv_at_markers(1) if theta is None else self.eval(theta, 1)
        return np.linalg.norm(d1, axis=-1)

    # -- differential geometry ------------------------------------------------

    def curvature(self, theta=None):
        """Signed curvature; +1/R for a counterclockwise circle."""
        if theta is None:
            d1 = self.deriv_at_markers(1)
            d2 = self.deriv_at_markers(2)
        else:
            d1 = self.eval(theta, 1)
            d2 = self.eval(theta, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        speed = np.linalg.norm(d1, axis=-1)
        return cross / speed ** 3

    def curvature_deriv_arclength(self, theta=None):
        """dK/ds along the curve (s = arc length)."""
        if theta is None:
            theta = self.thetas
        theta = np.asarray(theta, dtype=float)
        dth = 1e-5
        kp = self.curvature(theta + dth)
        km = self.curvature(theta - dth)
        return (kp - km) / (2.0 * dth) / self.speed(theta)

    def max_curvature(self, refine=4):
        th = 2.0 * np.pi * np.arange(refine * self.n) / (refine * self.n)
        return float(np.abs(self.curvature(th)).max())

    def arc_length(self):
        return float(self.speed().sum() * 2.0 * np.pi / self.n)

    def enclosed_area(self):
        p = self.points
        d1 = self.deriv_at_markers(1)
        integrand = p[:, 0] * d1[:, 1] - p[:, 1] * d1[:, 0]
        return float(0.5 * integrand.sum() * 2.0 * np.pi / self.n)

    def arclength_weights(self):
        """Quadrature weights for curve integrals at the markers."""
        return self.speed() * 2.0 * np.pi / self.n

    def min_domain_clearance(self):
        (x0, x1), (y0, y1) = self.domain
        p = self.points
        return float(min(p[:, 0].min() - x0, x1 - p[:, 0].max(),
                         p[:, 1].min() - y0, y1 - p[:, 1].max()))

    # -- point membership and distance ----------------------------------------

    def contains(self, pts):
        """Winding-number test, vectorized over pts of shape (m, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        poly = self.eval(2.0 * np.pi * np.arange(4 * self.n) / (4 * self.n))
        out = np.empty(pts.shape[0], dtype=bool)
        chunk = 4096
        for lo in range(0, pts.shape[0], chunk):
            sub = pts[lo:lo + chunk]
            vx = poly[None, :, 0] - sub[:, 0:1]
            vy = poly[None, :, 1] - sub[:, 1:2]
            vx2 = np.roll(vx, -1, axis=1)
            vy2 = np.roll(vy, -1, axis=1)
            ang = np.arctan2(vx * vy2 - vy * vx2, vx * vx2 + vy * vy2)
            out[lo:lo + chunk] = np.abs(ang.sum(axis=1)) > np.pi
        return out

    def signed_distance(self, pts, eps0=np.inf, newton_iters=30, tol=1e-13):
        """Project points onto the curve and return tubular coordinates.

        Newton iteration on the stationarity condition of the squared
        distance, started from the nearest node of a refined sampling.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        refine = 8
        th_fine = 2.0 * np.pi * np.arange(refine * self.n) / (refine * self.n)
        fine = self.eval(th_fine)
        tree = cKDTree(fine)
        _, idx = tree.query(pts)
        theta = th_fine[idx]

        converged = np.zeros(pts.shape[0], dtype=bool)
        for _ in range(newton_iters):
            r = self.eval(theta)
            r1 = self.eval(theta, 1)
            r2 = self.eval(theta, 2)
            diff = pts - r
            g = np.einsum("ij,ij->i", diff, r1)
            gp = -np.einsum("ij,ij->i", r1, r1) + np.einsum("ij,ij->i", diff, r2)
            step = np.where(np.abs(gp) > 0, g / gp, 0.0)
            step = np.clip(step, -0.5, 0.5)
            theta = theta - step
            newly = np.abs(step) < tol
            converged |= newly
            if converged.all():
                break
        theta = np.mod(theta, 2.0 * np.pi)

        r = self.eval(theta)
        dist = np.linalg.norm(pts - r, axis=-1)
        # fall back to the sampled minimum where Newton wandered
        bad = ~converged
        if bad.any():
            d_f = np.linalg.norm(pts[bad] - fine[idx[bad]], axis=-1)
            worse = dist[bad] > d_f
            t_bad = theta[bad]
            r_bad = r[bad]
            d_bad = dist[bad]
            t_bad[worse] = th_fine[idx[bad]][worse]
            r_bad[worse] = fine[idx[bad]][worse]
            d_bad[worse] = d_f[worse]
            theta[bad] = t_bad
            r[bad] = r_bad
            dist[bad] = d_bad

        nrm = self.normal(theta)
        side = np.sign(np.einsum("ij,ij->i", pts - r, nrm))
        side[side == 0.0] = 1.0
        # trust the normal near the curve, the winding test farther away
        far = dist > 0.25 / max(self.max_curvature(), 1e-12)
        if far.any():
            inside = self.contains(pts[far])
            side[far] = np.where(inside, -1.0, 1.0)
        d = side * dist
        valid = np.abs(d) <= eps0
        return TubularCoords(d, theta, valid, converged)

    # -- resampling and motion --------------------------------------------------

    def resample(self, n=None):
        """Redistribute markers to uniform arc length (spectral)."""
        n = n or self.n
        speed = self.speed()
        c = np.fft.rfft(speed) / self.n
        total = 2.0 * np.pi * c[0].real
        targets = total * np.arange(n) / n

        def arclen(th):
            # antiderivative of the trigonometric interpolant of |r'|
            s = c[0].real * th
            for k in range(1, len(c)):
                w = 2.0 if k < self.n / 2 else 1.0
                s = s + w * np.imag(c[k] * (np.exp(1j * k * th) - 1.0)) / k
            return s

        theta = 2.0 * np.pi * np.arange(n) / n
        for _ in range(50):
            f = arclen(theta) - targets
            df = np.maximum(np.interp(np.mod(theta, 2 * np.pi),
                                      self.thetas, speed, period=2 * np.pi), 1e-14)
            step = f / df
            theta = theta - step
            if np.abs(step).max() < 1e-14:
                break
        theta = theta - theta[0]  # keep the seam at the first marker
        return Curve(self.eval(theta), self.domain, check=False)

    def moved(self, velocity, dt):
        """Markers displaced along the outward normal; no respacing, no checks."""
        v = np.asarray(velocity, dtype=float)
        return Curve(self.points + dt * v[:, None] * self.normal(),
                     self.domain, check=False)

    # -- serialization ------------------------------------------------------------

    def to_csv(self, path):
        """Write 'x,y' marker rows plus a JSON sidecar with the metadata."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y"])
            writer.writerows(self.points.tolist())
        meta = {"orientation": "ccw", "domain": [list(d) for d in self.domain],
                "n_markers": int(self.n)}
        with open(str(path) + ".json", "w") as f:
            json.dump(meta, f, indent=1)

    @classmethod
    def from_csv(cls, path):
        pts = np.loadtxt(path, delimiter=",", skiprows=1)
        try:
            with open(str(path) + ".json") as f:
                meta = json.load(f)
            domain = tuple(tuple(d) for d in meta["domain"])
        except FileNotFoundError:
            domain = ((0.0, 1.0), (0.0, 1.0))
        return cls(pts, domain)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def curvature(curve, theta=None):
    return curve.curvature(theta)


def max_curvature(curve):
    return curve.max_curvature()


def signed_distance(curve, point, eps0=np.inf):
    """Tubular coordinates of a single point."""
    tc = curve.signed_distance(np.atleast_2d(point), eps0=eps0)
    return TubularCoords(float(tc.d[0]), float(tc.s[0]),
                         bool(tc.valid[0]), bool(tc.converged[0]))


def tubular_jacobian(curve, d, s):
    """Area-element factor 1 - d K(s) of the stretched local coordinates.

    Here d grows toward the region the profile layer assigns to the +1 phase;
    see the expansion module. Degenerates when |d| reaches the curvature
    radius, which raises.
    """
    k = curve.curvature(np.asarray(s, dtype=float))
    if np.any(np.abs(d) >= 1.0 / max(curve.max_curvature(), 1e-300)):
        raise ValueError("local coordinates degenerate: |d| >= 1/max|K|")
    return 1.0 - np.asarray(d) * k


def laplacian_coeffs(n, z, curvature_val, curvature_deriv=0.0):
    """Order-n coefficient triple (a_n, b_n, c_n) of the stretched Laplacian.

    In the tubular frame the Laplacian expands as
    ``d2/dz2 + sum_n eps^n (a_n d/dz + b_n d2/ds2 + c_n d/ds)`` with

    * ``a_n = -K^n z^(n-1)``
    * ``b_n = (n-1) K^(n-2) z^(n-2)`` for n >= 2, else 0
    * ``c_n = (n-1)(n-2)/2 z^(n-2) K^(n-3) dK/ds`` for n >= 3, else 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    k = np.asarray(curvature_val, dtype=float)
    dk = np.asarray(curvature_deriv, dtype=float)
    a = -np.power(k, n) * np.power(z, n - 1)
    if n >= 2:
        b = (n - 1) * np.power(k, n - 2) * np.power(z, n - 2)
    else:
        b = np.zeros(np.broadcast(z, k).shape)
    if n >= 3:
        c = 0.5 * (n - 1) * (n - 2) * np.power(z, n - 2) * np.power(k, n - 3) * dk
    else:
        c = np.zeros(np.broadcast(z, k, dk).shape)
    return a, b, c


def evolve(curve, velocity, dt, velocity_fn=None, k0=None, eps0=None):
    """Advance markers by dt along the outward normal and respace.

    Parameters
    ----------
    velocity : ndarray, shape (n,)
        Normal velocity at the markers.
    velocity_fn : callable, optional
        ``velocity_fn(curve) -> ndarray``; when given, a midpoint (RK2) step
        re-evaluates the velocity on the half-step curve.
    k0 : float, optional
        Curvature ceiling; exceeding it raises LifetimeExceeded.
    eps0 : float, optional
        Required clearance to the domain walls.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.asarray(velocity, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity contains non-finite values")
    if velocity_fn is None:
        moved = curve.moved(v, dt)
    else:
        half = curve.moved(v, 0.5 * dt)
        v_mid = np.asarray(velocity_fn(half), dtype=float)
        moved = curve.moved(v_mid, dt)
    new = Curve(moved.points, curve.domain, check=True).resample(curve.n)
    if k0 is not None and new.max_curvature() > k0:
        raise LifetimeExceeded(
            f"max curvature {new.max_curvature():.4g} exceeded ceiling {k0:.4g}")
    if eps0 is not None and new.min_domain_clearance() < eps0:
        raise LifetimeExceeded("curve left the clearance margin to the walls")
    return new


def enclosed_area(curve):
    return curve.enclosed_area()


def arc_length(curve):
    return curve.arc_length()


def hausdorff_distance(c1, c2, refine=8):
    """Symmetric Hausdorff distance between two curves (dense samplings)."""
    th1 = 2.0 * np.pi * np.arange(refine * c1.n) / (refine * c1.n)
    th2 = 2.0 * np.pi * np.arange(refine * c2.n) / (refine * c2.n)
    p1 = c1.eval(th1)
    p2 = c2.eval(th2)
    d12 = cKDTree(p2).query(p1)[0].max()
    d21 = cKDTree(p1).query(p2)[0].max()
    return float(max(d12, d21))


# -- factories ---------------------------------------------------------------

def circle(center=(0.5, 0.5), radius=0.25, n=128, domain=((0, 1), (0, 1))):
    th = 2.0 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + radius * np.cos(th),
                           center[1] + radius * np.sin(th)])
    return Curve(pts, domain)


def ellipse(center=(0.5, 0.5), a=0.3, b=0.2, n=128, domain=((0, 1), (0, 1))):
    th = 2.0 * np.pi * np.arange(n) / n
    pts = np.column_stack([center[0] + a * np.cos(th),
                           center[1] + b * np.sin(th)])
    return Curve(pts, domain).resample(n)


def perturbed_circle(center=(0.5, 0.5), radius=0.25, amp=0.05, mode=3, n=128,
                     domain=((0, 1), (0, 1))):
    th = 2.0 * np.pi * np.arange(n) / n
    r = radius * (1.0 + amp * np.cos(mode * th))
    pts = np.column_stack([center[0] + r * np.cos(th),
                           center[1] + r * np.sin(th)])
    return Curve(pts, domain).resample(n)


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _eval_series(c, theta, order, n):
    """Evaluate (a derivative of) the trigonometric interpolant."""
    theta = np.asarray(theta, dtype=float)
    ks = np.arange(len(c))
    fac = (1j * ks) ** order
    coef = c * fac
    weights = np.full(len(c), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
        if order % 2 == 1:
            coef[-1] = 0.0  # Nyquist cosine has no consistent odd derivative
    phase = np.exp(1j * np.outer(theta, ks))
    return (phase * (weights * coef)).real.sum(axis=-1)


def _deriv_markers(c, order, n):
    ks = np.arange(len(c))
    return np.fft.irfft(c * n * (1j * ks) ** order, n)


def _polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _self_intersects(pts):
    """Exact segment-intersection scan over non-adjacent marker segments."""
    n = pts.shape[0]
    a = pts
    b = np.roll(pts, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))  # first and last segments are adjacent
    i, j = i[keep], j[keep]
    p, r = a[i], b[i] - a[i]
    q, s = a[j], b[j] - a[j]
    rxs = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0])
    u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t / rxs
        u = u / rxs
    hit = (np.abs(rxs) > 1e-300) & (t > 0) & (t < 1) & (u > 0) & (u < 1)
    return bool(hit.any())
