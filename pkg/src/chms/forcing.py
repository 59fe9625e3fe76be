"""Analytic forcing fields and their expansion containers.

Forcings are represented as band-limited cosine-series fields, which makes
the wall conditions (vanishing normal derivative) exact in the working
basis.  The library fields below are the ones used by the experiment
drivers: constants, separable cosine modes, and projected Gaussian bumps.
"""

from __future__ import annotations

import numpy as np

from .grid import ScalarField2D


class ForcingLimit:
    """Leading-order forcing pair (g1, g2) for the limit boundary problem.

    ``g2`` must be wall-compatible (zero normal derivative); since fields are
    cosine series this holds by construction, and a large high-mode tail is
    treated as evidence that the sampled function was not compatible.
    """

    def __init__(self, g1, g2, tail_tol=1e-6):
        if g1.data.shape != g2.data.shape:
            raise ValueError("g1 and g2 must share a grid")
        for name, f in (("g1", g1), ("g2", g2)):
            if not np.all(np.isfinite(f.data)):
                raise ValueError(f"{name} contains non-finite values")
        tail = g2.spectral_tail_fraction()
        if tail > tail_tol:
            raise ValueError(
                f"g2 has spectral tail fraction {tail:.2e}; sample a "
                "wall-compatible function or band-limit it first")
        self.g1 = g1
        self.g2 = g2

    @classmethod
    def zero(cls, nx=128, ny=None, lx=1.0, ly=1.0):
        ny = ny or nx
        return cls(ScalarField2D.zeros(nx, ny, lx, ly),
                   ScalarField2D.zeros(nx, ny, lx, ly))

    def mirrored(self):
        return ForcingLimit(-self.g1, -self.g2)

    def resampled(self, nx, ny=None):
        ny = ny or nx
        def resize(f):
            c = np.zeros((nx, ny))
            src = f.coeffs
            c[:min(nx, src.shape[0]), :min(ny, src.shape[1])] = \
                src[:min(nx, src.shape[0]), :min(ny, src.shape[1])]
            return ScalarField2D.from_coeffs(c, f.lx, f.ly)
        return ForcingLimit(resize(self.g1), resize(self.g2))


class ForcingExpansion:
    """Families {g1_j}, {g2_j} of expansion coefficients of the forcings.

    Parameters
    ----------
    orders : list of (ScalarField2D, ScalarField2D)
        Pairs (g1_j, g2_j) for j = 0 .. N-1.
    remainder_bound : float
        Sup bound assumed for the order-N remainder fields.
    """

    def __init__(self, orders, remainder_bound=0.0):
        if not orders:
            raise ValueError("need at least the order-0 forcing pair")
        self.orders = [ForcingLimit(g1, g2) for (g1, g2) in orders]
        self.remainder_bound = float(remainder_bound)

    @property
    def n_orders(self):
        return len(self.orders)

    def limit(self):
        """The order-0 pair as a ForcingLimit."""
        return self.orders[0]

    def order(self, j):
        if j < len(self.orders):
            return self.orders[j]
        zero = ScalarField2D.zeros(*self.orders[0].g1.data.shape,
                                   self.orders[0].g1.lx, self.orders[0].g1.ly)
        return ForcingLimit(zero, zero.copy())

    def at_eps(self, eps):
        """Summed fields (G1, G2) at a concrete interface width."""
        g1 = sum((eps ** j) * fl.g1 for j, fl in enumerate(self.orders))
        g2 = sum((eps ** j) * fl.g2 for j, fl in enumerate(self.orders))
        return g1, g2

    @classmethod
    def from_limit(cls, limit, remainder_bound=0.0):
        return cls([(limit.g1, limit.g2)], remainder_bound)

    def resampled(self, nx, ny=None):
        pairs = []
        for fl in self.orders:
            r = fl.resampled(nx, ny)
            pairs.append((r.g1, r.g2))
        return ForcingExpansion(pairs, self.remainder_bound)

    def mirrored(self):
        return ForcingExpansion([(-fl.g1, -fl.g2) for fl in self.orders],
                                self.remainder_bound)


# ---------------------------------------------------------------------------
# named analytic fields
# ---------------------------------------------------------------------------

def constant(value, nx=128, ny=None, lx=1.0, ly=1.0):
    ny = ny or nx
    return ScalarField2D(np.full((nx, ny), float(value)), lx, ly)


def cosine_mode(amp, kx, ky, nx=128, ny=None, lx=1.0, ly=1.0):
    """amp * cos(kx pi x / lx) cos(ky pi y / ly)."""
    ny = ny or nx
    c = np.zeros((nx, ny))
    c[int(kx), int(ky)] = float(amp)
    return ScalarField2D.from_coeffs(c, lx, ly)


def gaussian_bump(amp, center, sigma, nx=128, ny=None, lx=1.0, ly=1.0,
                  band_frac=0.5):
    """Gaussian bump projected to a wall-compatible band-limited field."""
    ny = ny or nx
    cx, cy = center
    raw = ScalarField2D.from_function(
        lambda x, y: amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2)
                                  / (2.0 * sigma ** 2)),
        nx, ny, lx, ly)
    return raw.band_limit(band_frac)


_BUILDERS = {
    "constant": lambda p, nx, ny, lx, ly: constant(p.get("value", 0.0), nx, ny, lx, ly),
    "cosine": lambda p, nx, ny, lx, ly: cosine_mode(
        p.get("amp", 1.0), p.get("kx", 1), p.get("ky", 0), nx, ny, lx, ly),
    "gaussian": lambda p, nx, ny, lx, ly: gaussian_bump(
        p.get("amp", 1.0), tuple(p.get("center", (0.5, 0.5))),
        p.get("sigma", 0.1), nx, ny, lx, ly,
        p.get("band_frac", 0.5)),
}


def build_field(spec, nx=128, ny=None, lx=1.0, ly=1.0):
    """Build a named analytic field from a {kind: ..., params...} mapping.

    A list is summed term by term; None or {} gives the zero field.
    """
    ny = ny or nx
    if spec is None or spec == {}:
        return ScalarField2D.zeros(nx, ny, lx, ly)
    if isinstance(spec, (list, tuple)):
        total = ScalarField2D.zeros(nx, ny, lx, ly)
        for item in spec:
            total = total + build_field(item, nx, ny, lx, ly)
        return total
    kind = spec["kind"]
    if kind not in _BUILDERS:
        raise KeyError(f"unknown forcing kind {kind!r}")
    return _BUILDERS[kind](spec, nx, ny, lx, ly)


def build_forcing(g1_spec, g2_spec, nx=128, ny=None, lx=1.0, ly=1.0):
    ny = ny or nx
    return ForcingLimit(build_field(g1_spec, nx, ny, lx, ly),
                        build_field(g2_spec, nx, ny, lx, ly))
