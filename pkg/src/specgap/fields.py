"""Periodic magnetic fields on flat 2D domains, field intensity and wells.

A field is the scalar ``b`` in ``B = b dx ^ dy``.  With the flat metric the
intensity of the field is simply ``|b|``.  Fields come from a small set of
parametric families (see :data:`FAMILIES`) plus a homogeneous polynomial
form given as a coefficient table.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage, optimize

from .errors import DomainNotFundamental, NoWells


class FieldKind(enum.Enum):
    PointWells2D = "PointWells2D"
    LineWellCylinder = "LineWellCylinder"
    Constant2D = "Constant2D"
    PolynomialModel = "PolynomialModel"


@dataclass(frozen=True)
class Cell:
    """Parallelogram ``origin + s*e1 + t*e2`` with ``s, t`` in [0, 1]."""

    origin: tuple
    e1: tuple
    e2: tuple

    @classmethod
    def rectangle(cls, xlim, ylim):
        return cls((xlim[0], ylim[0]), (xlim[1] - xlim[0], 0.0), (0.0, ylim[1] - ylim[0]))

    @classmethod
    def centered(cls, e1, e2, center=(0.0, 0.0)):
        """Cell spanned by ``e1, e2`` and centred at ``center``."""
        o = np.asarray(center, float) - 0.5 * np.asarray(e1, float) - 0.5 * np.asarray(e2, float)
        return cls(tuple(o), tuple(map(float, e1)), tuple(map(float, e2)))

    @property
    def area(self):
        return abs(self.e1[0] * self.e2[1] - self.e1[1] * self.e2[0])

    def point(self, s, t):
        s = np.asarray(s, float)
        t = np.asarray(t, float)
        x = self.origin[0] + s * self.e1[0] + t * self.e2[0]
        y = self.origin[1] + s * self.e1[1] + t * self.e2[1]
        return x, y

    def param(self, x, y):
        """Inverse of :meth:`point`."""
        m = np.array([[self.e1[0], self.e2[0]], [self.e1[1], self.e2[1]]])
        rhs = np.stack([np.asarray(x, float) - self.origin[0], np.asarray(y, float) - self.origin[1]])
        st = np.linalg.solve(m, rhs.reshape(2, -1)).reshape(rhs.shape)
        return st[0], st[1]

    def boundary(self, samples):
        """Points on the four edges, ``samples`` per edge."""
        u = np.linspace(0.0, 1.0, samples)
        s = np.concatenate([u, np.ones_like(u), u, np.zeros_like(u)])
        t = np.concatenate([np.zeros_like(u), u, np.ones_like(u), u])
        return self.point(s, t)

    def contains(self, x, y, margin=0.0):
        s, t = self.param(x, y)
        return (s > margin) & (s < 1 - margin) & (t > margin) & (t < 1 - margin)


@dataclass(frozen=True)
class FieldSpec:
    """A scalar magnetic field with its lattice and well metadata.

    ``b`` and the closed-form Landau potential are vectorised callables of
    ``(x, y)``.  ``lattice`` holds the period vectors; for a cylinder field
    the first vector is the periodic direction of circumference ``L``.
    ``model`` is the coefficient table ``((i, j), c)`` of the degree-``k``
    Taylor polynomial at the declared well (for point wells), or of the
    field itself for :attr:`FieldKind.PolynomialModel`.
    """

    kind: FieldKind
    name: str
    params: tuple
    k: int
    beta1: float
    lattice: Optional[tuple] = None
    wells: tuple = ()
    axis: str = "y"
    model: tuple = ()
    b: Callable = field(default=None, compare=False, repr=False)
    # Landau antiderivative F(s) = int_0^s b along the varying axis (line
    # fields) or A2 = int_0^x b(t, y) dt (2D fields); None means quadrature.
    antideriv: Optional[Callable] = field(default=None, compare=False, repr=False)
    antideriv_dy: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __call__(self, x, y):
        return self.b(np.asarray(x, float), np.asarray(y, float))

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    @property
    def periodic_length(self):
        """Circumference of the cylinder (line fields only)."""
        return self.param("L", 1.0)


def trplus(field: FieldSpec, x, y=None):
    """Field intensity Tr+(B) at ``(x, y)``; equals ``|b|`` in 2D."""
    if y is None:
        x, y = x
    return np.abs(field(x, y))


def _poly_eval(coeffs, x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    for (i, j), c in coeffs:
        out = out + c * x**i * y**j
    return out


def constant(value=1.0, period=1.0):
    value = float(value)
    return FieldSpec(
        kind=FieldKind.Constant2D,
        name="constant",
        params=(("value", value), ("period", float(period))),
        k=0,
        beta1=value,
        lattice=((period, 0.0), (0.0, period)),
        model=(((0, 0), value),),
        b=lambda x, y: np.full(np.broadcast(x, y).shape, value),
        antideriv=lambda x, y: value * x + 0.0 * y,
        antideriv_dy=lambda x, y: 0.0 * x * y,
    )


def sin2_wells(amplitude=1.0):
    """``b = a (sin^2(pi x) + sin^2(pi y))``: one k = 2 well per unit cell."""
    a = float(amplitude)
    p2 = math.pi**2

    def b(x, y):
        return a * (np.sin(np.pi * x) ** 2 + np.sin(np.pi * y) ** 2)

    def a2(x, y):
        return a * (x * np.sin(np.pi * y) ** 2 + x / 2 - np.sin(2 * np.pi * x) / (4 * np.pi))

    def a2_dy(x, y):
        return a * np.pi * x * np.sin(2 * np.pi * y)

    return FieldSpec(
        kind=FieldKind.PointWells2D,
        name="sin2_wells",
        params=(("amplitude", a),),
        k=2,
        beta1=2 * p2 * a,
        lattice=((1.0, 0.0), (0.0, 1.0)),
        wells=((0.0, 0.0),),
        model=(((2, 0), a * p2), ((0, 2), a * p2)),
        b=b,
        antideriv=a2,
        antideriv_dy=a2_dy,
    )


def cos_product(amplitude=1.0):
    """``b = a (1 - cos(2 pi x) cos(2 pi y))``: k = 2 wells on a centred lattice."""
    a = float(amplitude)
    tp = 2 * math.pi

    def b(x, y):
        return a * (1 - np.cos(tp * x) * np.cos(tp * y))

    def a2(x, y):
        return a * (x - np.sin(tp * x) * np.cos(tp * y) / tp)

    def a2_dy(x, y):
        return a * np.sin(tp * x) * np.sin(tp * y)

    return FieldSpec(
        kind=FieldKind.PointWells2D,
        name="cos_product",
        params=(("amplitude", a),),
        k=2,
        beta1=2 * tp**2 / 2 * a,
        lattice=((0.5, 0.5), (0.5, -0.5)),
        wells=((0.0, 0.0),),
        model=(((2, 0), a * tp**2 / 2), ((0, 2), a * tp**2 / 2)),
        b=b,
        antideriv=a2,
        antideriv_dy=a2_dy,
    )


def sinusoid(beta1=2 * math.pi, axis="y", period=1.0, L=1.0):
    """Line-well field ``b = (beta1/w) sin(w s)``, ``w = 2 pi / period``.

    ``s`` is the coordinate named by ``axis``; the field is constant along
    the other axis, which is periodic with circumference ``L``.  Zero lines
    sit at ``s = 0`` and ``s = period/2``; the leading term at ``s = 0`` is
    ``beta1 * s``.
    """
    beta1 = float(beta1)
    w = 2 * math.pi / period

    def prof(s):
        return beta1 / w * np.sin(w * s)

    def anti(s):
        return beta1 / w**2 * (1 - np.cos(w * s))

    if axis == "y":
        lattice = ((L, 0.0), (0.0, period))
        wells = ((0.0, 0.0), (0.0, period / 2))
    else:
        lattice = ((period, 0.0), (0.0, L))
        wells = ((0.0, 0.0), (period / 2, 0.0))
    return _line_field("sinusoid", prof, anti, beta1, 1, axis, L, lattice, wells,
                       (("beta1", beta1), ("axis", axis), ("period", float(period)), ("L", float(L))))


def polynomial_line(beta1=1.0, k=1, L=2 * math.pi):
    """Exact model line field ``b(y) = beta1 y^k / k!`` on the cylinder."""
    beta1 = float(beta1)
    fk = math.factorial(k)

    def prof(s):
        return beta1 * s**k / fk

    def anti(s):
        return beta1 * s ** (k + 1) / (fk * (k + 1))

    return _line_field("polynomial_line", prof, anti, beta1, k, "y", L, None, ((0.0, 0.0),),
                       (("beta1", beta1), ("k", int(k)), ("L", float(L))))


def _line_field(name, prof, anti, beta1, k, axis, L, lattice, wells, params):
    if axis == "y":
        b = lambda x, y: prof(y) + 0.0 * x
    elif axis == "x":
        b = lambda x, y: prof(x) + 0.0 * y
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return FieldSpec(
        kind=FieldKind.LineWellCylinder,
        name=name,
        params=params,
        k=k,
        beta1=beta1,
        lattice=lattice,
        wells=wells,
        axis=axis,
        model=(((0, k) if axis == "y" else (k, 0), beta1 / math.factorial(k)),),
        b=b,
        antideriv=anti,
        antideriv_dy=prof,
    )


def polynomial(coeffs):
    """Homogeneous polynomial model field from ``{(i, j): c}``."""
    table = tuple(sorted(((int(i), int(j)), float(c)) for (i, j), c in dict(coeffs).items() if c != 0))
    if not table:
        raise ValueError("polynomial field needs at least one nonzero coefficient")
    degrees = {i + j for (i, j), _ in table}
    if len(degrees) != 1:
        raise ValueError(f"polynomial field must be homogeneous, got degrees {sorted(degrees)}")
    k = degrees.pop()
    a2_table = tuple(((i + 1, j), c / (i + 1)) for (i, j), c in table)
    a2_dy_table = tuple(((i + 1, j - 1), c * j / (i + 1)) for (i, j), c in table if j > 0)
    beta1 = max(abs(c) * math.factorial(i) * math.factorial(j) for (i, j), c in table)
    return FieldSpec(
        kind=FieldKind.PolynomialModel,
        name="polynomial",
        params=(("coeffs", table),),
        k=k,
        beta1=beta1,
        wells=((0.0, 0.0),),
        model=table,
        b=lambda x, y: _poly_eval(table, x, y),
        antideriv=lambda x, y: _poly_eval(a2_table, x, y),
        antideriv_dy=lambda x, y: _poly_eval(a2_dy_table, x, y),
    )


def from_callable(b, k, lattice=None, wells=(), name="custom"):
    """Wrap a Python callable ``b(x, y)``; the gauge then uses quadrature."""
    return FieldSpec(
        kind=FieldKind.PointWells2D,
        name=name,
        params=(),
        k=int(k),
        beta1=float("nan"),
        lattice=lattice,
        wells=tuple(wells),
        b=lambda x, y: np.asarray(b(x, y), float) + 0.0 * x * y,
    )


def model_field(fs: FieldSpec) -> FieldSpec:
    """The degree-k Taylor polynomial of ``fs`` at its declared well."""
    return polynomial({ij: c for ij, c in fs.model})


FAMILIES = {
    "constant": constant,
    "sin2_wells": sin2_wells,
    "cos_product": cos_product,
    "sinusoid": sinusoid,
    "polynomial_line": polynomial_line,
    "polynomial": polynomial,
}


def make_field(name, **params):
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown field family {name!r}; known: {sorted(FAMILIES)}") from None
    return factory(**params)


def check_periodic(fs: FieldSpec, samples=64, tol=1e-12):
    """Max deviation ``|b(p + g) - b(p)|`` over a sample grid and lattice generators."""
    if fs.lattice is None:
        return 0.0
    u = np.linspace(-1.0, 1.0, samples)
    x, y = np.meshgrid(u, u, indexing="ij")
    dev = 0.0
    for g in fs.lattice:
        dev = max(dev, float(np.max(np.abs(fs(x + g[0], y + g[1]) - fs(x, y)))))
    return dev


@dataclass(frozen=True)
class BarrierReport:
    passed: bool
    boundary_min: float
    b0: float
    eps0: float
    margin: float
    argmin: tuple


def _cell_min(fs, cell, resolution):
    u = (np.arange(resolution) + 0.5) / resolution
    s, t = np.meshgrid(u, u, indexing="ij")
    x, y = cell.point(s, t)
    tr = trplus(fs, x, y)
    bx, by = cell.boundary(resolution)
    return min(float(tr.min()), float(trplus(fs, bx, by).min()))


def _check_fundamental(fs, cell):
    if fs.lattice is None:
        return
    (a, b), (c, d) = fs.lattice
    det = abs(a * d - b * c)
    if abs(cell.area - det) > 1e-9:
        raise DomainNotFundamental(f"cell area {cell.area:.12g} differs from lattice covolume {det:.12g}")


def check_barrier(fs: FieldSpec, domain: Cell, eps0: float, samples: int = 512, resolution: int = 512):
    """Test ``Tr+(B) >= b0 + eps0`` on the boundary of a fundamental cell."""
    if samples < 100:
        raise ValueError("need at least 100 boundary samples per edge")
    _check_fundamental(fs, domain)
    bx, by = domain.boundary(samples)
    tr = trplus(fs, bx, by)
    i = int(np.argmin(tr))
    bmin = float(tr[i])
    b0 = min(_cell_min(fs, domain, resolution), bmin)
    margin = bmin - b0 - eps0
    return BarrierReport(bool(margin >= 0), bmin, b0, float(eps0), margin, (float(bx[i]), float(by[i])))


@dataclass(frozen=True)
class Well:
    center: tuple
    k: float
    beta1: float
    shape: str  # "point" or "curve"
    area_fraction: float


@dataclass(frozen=True)
class WellCatalog:
    wells: tuple
    b0: float
    eps0: float
    fundamental_domain: Cell
    eps1: float
    labels: np.ndarray = field(compare=False, repr=False, default=None)


def _merge_periodic(labels):
    """Union labels that touch across opposite edges of the sample grid."""
    parent = {}

    def find(a):
        while parent.get(a, a) != a:
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for e1, e2 in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for a, b in zip(e1, e2):
            if a and b:
                union(int(a), int(b))
    out = labels.copy()
    for lab in np.unique(labels):
        if lab:
            out[labels == lab] = find(int(lab))
    return out


def fit_order(fs, center, b0, scale, directions=16, rmin=1e-3, rmax=1e-1, normal=False):
    """Log-log slope of ``Tr+(B) - b0`` against distance from ``center``.

    Radii span ``[rmin, rmax] * scale``.  Directions along which the field
    barely grows (tangent to a zero curve) are discarded; the median slope of
    the rest is returned together with the coefficient at unit radius
    (the median over directions, or the largest one with ``normal``, which
    for a zero curve is the coefficient along its normal).
    """
    r = np.geomspace(rmin, rmax, 24) * scale
    growth, slopes, prof = [], [], []
    for th in np.linspace(0, np.pi, directions, endpoint=False):
        x = center[0] + r * np.cos(th)
        y = center[1] + r * np.sin(th)
        g = trplus(fs, x, y) - b0
        growth.append(g[-1])
        prof.append(g)
        slopes.append(np.polyfit(np.log(r), np.log(g), 1)[0] if np.all(g > 0) else np.nan)
    growth = np.asarray(growth)
    keep = (growth >= 0.1 * growth.max()) & np.isfinite(slopes)
    order = float(np.median(np.asarray(slopes)[keep]))
    # coefficient with the integer order fixed, read off at the three smallest radii
    kk = max(int(round(order)), 0)
    coefs = np.array([np.mean(g[:3] / r[:3] ** kk) for g in np.asarray(prof)[keep]])
    c = np.max(coefs) if normal else np.median(coefs)
    return order, float(c)


def locate_wells(fs: FieldSpec, domain: Cell, eps1: float, resolution: int = 512):
    """Connected components of ``{Tr+(B) < b0 + eps1}`` in a fundamental cell."""
    u = (np.arange(resolution) + 0.5) / resolution
    s, t = np.meshgrid(u, u, indexing="ij")
    x, y = domain.point(s, t)
    tr = trplus(fs, x, y)
    b0 = float(tr.min())
    bx, by = domain.boundary(resolution)
    eps0 = float(trplus(fs, bx, by).min()) - b0
    mask = tr < b0 + eps1
    if not mask.any() or mask.all():
        raise NoWells(f"sublevel set {{Tr+ < {b0 + eps1:.6g}}} is {'empty' if not mask.any() else 'the whole cell'}")
    labels, n = ndimage.label(mask)
    if fs.lattice is not None:
        labels = _merge_periodic(labels)
    (a, b), (c, d) = domain.e1, domain.e2
    diam = max(math.hypot(a + c, b + d), math.hypot(a - c, b - d))
    found = []
    for lab in np.unique(labels):
        if lab == 0:
            continue
        comp = labels == lab
        idx = np.flatnonzero(comp)
        j = idx[np.argmin(tr.ravel()[idx])]
        start = np.array([x.ravel()[j], y.ravel()[j]])
        res = optimize.minimize(lambda p: float(trplus(fs, p[0], p[1])), start, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        center = res.x if res.fun <= tr.ravel()[j] else start
        found.append((lab, comp, center, min(float(res.fun), float(tr.ravel()[j]))))
    # the sampled minimum sits above the true one; refit orders against the refined b0
    b0 = min(b0, min(f[3] for f in found))
    wells = []
    for lab, comp, center, _ in found:
        # a component that wraps across the cell in one direction is a curve
        si, ti = np.nonzero(comp)
        spans = (si.min() == 0 and si.max() == resolution - 1, ti.min() == 0 and ti.max() == resolution - 1)
        shape = "curve" if any(spans) else "point"
        order, coef = fit_order(fs, center, b0, diam, normal=shape == "curve")
        kk = int(round(order))
        beta1 = coef * math.factorial(kk) if kk >= 0 else float("nan")
        wells.append(Well((float(center[0]), float(center[1])), order, beta1, shape, float(comp.mean())))
    wells.sort(key=lambda w: (round(w.center[0], 9), round(w.center[1], 9)))
    return WellCatalog(tuple(wells), b0, eps0, domain, float(eps1), labels)
