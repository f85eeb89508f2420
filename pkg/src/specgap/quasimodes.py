"""Explicit quasimodes and their discrete residuals.

Three constructions are provided:

* a Gaussian at a point where the field intensity equals a target value,
* the dilated eigenfunction of the polynomial model operator at a point zero,
* a separated momentum mode on a cylinder around a line zero.

Each returns a normalised grid vector ``v`` with target ``mu`` and residual
``|(H - mu) v|`` on the discrete operator it was built for.

Phase convention: for a gauge ``A' = A + d phi`` the discrete operators obey
``H' = W H W^*`` with ``W = diag(exp(i phi / h))``, so states transform as
``v' = exp(i phi / h) v``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .discretization import DiscreteOperator, GaugeField, Grid, assemble, landau_gauge
from .eigensolve import lowest_eigenpairs
from .errors import CutoffClipped, InsufficientSamples, NoLevelSet
from .fields import FieldKind, FieldSpec, model_field, trplus
from .models import MontgomeryParams, cylinder_fiber, cylinder_operator, model_operator_2d, select_p


class Recipe(enum.Enum):
    PointGaussian = "PointGaussian"
    ModelRescaled = "ModelRescaled"
    CylinderSeparated = "CylinderSeparated"


@dataclass
class Quasimode:
    vector: np.ndarray = field(repr=False)
    mu: float
    residual: float
    recipe: Recipe
    h: float
    grid: Grid = field(repr=False)
    params: dict = field(default_factory=dict)
    operator: Optional[DiscreteOperator] = field(default=None, repr=False, compare=False)

    @property
    def interval(self):
        return (self.mu - self.residual, self.mu + self.residual)

    def write_csv(self, path):
        """Columns: node, x, y, re, im (active nodes in matrix order)."""
        x, y = self.grid.coords()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "x", "y", "re", "im"])
            for i, (a, b, v) in enumerate(zip(x, y, self.vector)):
                w.writerow([i, repr(float(a)), repr(float(b)), repr(float(v.real)), repr(float(v.imag))])


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    f = lambda s: np.where(s > 1e-300, np.exp(-1.0 / np.where(s > 1e-300, s, 1.0)), 0.0)
    a, b = f(t), f(1.0 - t)
    return a / (a + b)


def cutoff(r, r1, r2):
    """Radial bump equal to 1 on ``r <= r1`` and 0 on ``r >= r2``."""
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    return 1.0 - smooth_step((np.asarray(r, float) - r1) / (r2 - r1))


def residual(op: DiscreteOperator, v, mu):
    """``|(M - mu) v| / |v|``."""
    return float(np.linalg.norm(op.matrix @ v - mu * v) / np.linalg.norm(v))


def cell_unit(fs: FieldSpec):
    """Length unit for cutoff radii: square root of the cell area."""
    if fs.kind is FieldKind.PointWells2D and fs.lattice is not None:
        (a, b), (c, d) = fs.lattice
        return math.sqrt(abs(a * d - b * c))
    if fs.kind is FieldKind.LineWellCylinder and fs.lattice is not None:
        return float(np.linalg.norm(fs.lattice[1])) if len(fs.lattice) > 1 else 1.0
    return 1.0


def _check_support(grid: Grid, center, r2, axes=(0, 1)):
    """The cutoff disk (or slab) must clear the Dirichlet boundary by 4 cells."""
    for i in axes:
        if i == 0 and grid.periodic_x:
            continue
        d = grid.spacings[i]
        if center[i] - r2 < grid.lower[i] + 4 * d or center[i] + r2 > grid.upper[i] - 4 * d:
            raise ValueError(f"cutoff radius {r2:g} leaves less than 4 cells of margin on axis {i}")


def _radii(cut, fs):
    u = cell_unit(fs)
    return cut[0] * u, cut[1] * u


def level_point(fs: FieldSpec, center, target, rmax=None, angles=720, tol=1e-14):
    """Point where ``trplus = target`` on the first ray from ``center`` that reaches it.

    Rays are tried in order of increasing angle from the +x axis; on the
    first one whose intensity crosses ``target`` before ``rmax`` the crossing
    is found by bisection.
    """
    cx, cy = center
    rmax = rmax if rmax is not None else 0.5 * cell_unit(fs)
    r = np.linspace(0.0, rmax, 2001)
    for th in 2 * np.pi * np.arange(angles) / angles:
        c, s = math.cos(th), math.sin(th)
        g = trplus(fs, cx + r * c, cy + r * s) - target
        idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)
        idx = idx[g[idx] != g[idx + 1]] if idx.size else idx
        if idx.size == 0:
            continue
        lo, hi = r[idx[0]], r[idx[0] + 1]
        glo = g[idx[0]]
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            gm = float(trplus(fs, cx + mid * c, cy + mid * s)) - target
            if np.sign(gm) == np.sign(glo) and gm != 0:
                lo, glo = mid, gm
            else:
                hi = mid
        rr = 0.5 * (lo + hi)
        return (cx + rr * c, cy + rr * s), float(th)
    raise NoLevelSet(f"intensity never reaches {target:g} within radius {rmax:g} of {center}")


def _well_center(fs):
    if fs.wells:
        return tuple(float(c) for c in fs.wells[0])
    return (0.0, 0.0)


def _node_phase(gauge: GaugeField, x, y, h):
    """``exp(i phi0 / h)`` for the gradient part of a shifted gauge."""
    if gauge.phi is None:
        return 1.0
    return np.exp(1j * gauge.phi(x, y) / h)


def point_gaussian_quasimode(fs: FieldSpec, gauge: GaugeField, grid: Grid, h: float, target_mu: float,
                             point=None, center=None, cut=(0.25, 0.4), clip_tol=1e-8,
                             op: Optional[DiscreteOperator] = None) -> Quasimode:
    """Gaussian quasimode at a point where the intensity equals ``target_mu``.

    Around ``x_j`` the gauge is ``A(x_j) + J X + O(|X|^2)``.  With ``S`` the
    symmetric part of ``J`` and ``phi = A(x_j).X + X.S X / 2`` the remainder
    ``A - d phi`` is the symmetric-gauge potential of the constant field
    ``b(x_j)`` up to ``O(|X|^2)``, whose ground state is
    ``exp(-|b| |X|^2 / (4h))`` with energy ``h |b|``.  The quasimode is
    ``chi(|X|) exp(i phi / h) exp(-mu |X|^2 / (4h))`` and its residual is
    measured against ``h mu``.

    ``cut`` gives the plateau and support radii in cell units.  Raises
    :class:`CutoffClipped` when the Gaussian mass outside the plateau exceeds
    ``clip_tol``.
    """
    center = center if center is not None else _well_center(fs)
    if point is None:
        point, angle = level_point(fs, center, target_mu)
    else:
        angle = None
    mu = float(target_mu)
    r1, r2 = _radii(cut, fs)
    clipped = math.exp(-mu * r1 * r1 / (2 * h))
    if clipped > clip_tol:
        raise CutoffClipped(f"Gaussian mass {clipped:.2e} outside the plateau radius {r1:g} at h = {h:g}")
    _check_support(grid, point, r2)
    x, y = grid.coords()
    X1, X2 = x - point[0], y - point[1]
    base = replace(gauge, phi=None, grad_phi=None)
    a = np.array(base(point[0], point[1]), float).ravel()
    if gauge.jac is None:
        raise ValueError("the gauge has no closed-form Jacobian")
    J = np.asarray(gauge.jac(point[0], point[1]), float).reshape(2, 2)
    S = 0.5 * (J + J.T)
    phi = a[0] * X1 + a[1] * X2 + 0.5 * (S[0, 0] * X1 * X1 + 2 * S[0, 1] * X1 * X2 + S[1, 1] * X2 * X2)
    r = np.hypot(X1, X2)
    v = cutoff(r, r1, r2) * np.exp(1j * phi / h) * np.exp(-mu * r * r / (4 * h))
    v = v * _node_phase(gauge, x, y, h)
    v = v / np.linalg.norm(v)
    op = op if op is not None else assemble(fs, gauge, grid, h, check_resolution=False)
    res = residual(op, v, h * mu)
    return Quasimode(v, h * mu, res, Recipe.PointGaussian, h, grid,
                     dict(point=tuple(map(float, point)), angle=angle, b_point=float(J[1, 0] - J[0, 1]),
                          r1=r1, r2=r2, clipped_mass=clipped), op)


_GL_T, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def radial_gauge_difference(gauge: GaugeField, model_gauge: GaugeField, center, X1, X2):
    """``psi(X) = int_0^1 (A(x0 + tX) - A0(tX)) . X dt``.

    When ``d(A - A0) = O(|X|^{k+1})`` this gives ``A - A0 - d psi = O(|X|^{k+2})``
    (radial homotopy formula), whatever the gauges are.
    """
    psi = np.zeros_like(X1)
    for t, w in zip(_GL_T, _GL_W):
        a1, a2 = gauge(center[0] + t * X1, center[1] + t * X2)
        m1, m2 = model_gauge(t * X1, t * X2)
        psi += w * ((a1 - m1) * X1 + (a2 - m2) * X2)
    return psi


def model_eigenvector(model: FieldSpec, grid: Grid, center, h: float, j: int):
    """Eigenpair ``j`` of the discrete ``K^1`` on the dilated copy of ``grid``.

    The node ``x`` maps to ``(x - center) / h^{1/(k+2)}``; by the exact
    discrete covariance this equals the eigenpair of ``K^h`` on ``grid``
    divided by ``h^{(2k+2)/(k+2)}``.
    """
    ell = h ** (1.0 / (model.k + 2))
    sg = replace(grid, lower=tuple((a - c) / ell for a, c in zip(grid.lower, center)),
                 upper=tuple((b - c) / ell for b, c in zip(grid.upper, center)))
    spec = lowest_eigenpairs(model_operator_2d(model, 1.0, sg), j)
    return float(spec.eigenvalues[j - 1]), spec.eigenvectors[:, j - 1]


def model_rescaled_quasimode(fs: FieldSpec, gauge: GaugeField, grid: Grid, h: float, j: int, center=None,
                             cut=(0.25, 0.4), clip_tol=1e-8, model: Optional[FieldSpec] = None,
                             op: Optional[DiscreteOperator] = None) -> Quasimode:
    """Cut-off dilated model eigenfunction at a point zero of order ``k``.

    ``w_j`` is the ``j``-th eigenvector of the discrete model operator on the
    node set dilated by ``h^{-1/(k+2)}``, so ``v = chi exp(i psi / h) w_j``
    with ``psi`` from :func:`radial_gauge_difference` and target
    ``mu = h^{(2k+2)/(k+2)} lambda_j``.
    """
    center = center if center is not None else _well_center(fs)
    model = model or model_field(fs)
    k = model.k
    lam, w = model_eigenvector(model, grid, center, h, j)
    mu = h ** ((2 * k + 2) / (k + 2)) * lam
    r1, r2 = _radii(cut, fs)
    _check_support(grid, center, r2)
    x, y = grid.coords()
    X1, X2 = x - center[0], y - center[1]
    r = np.hypot(X1, X2)
    w = w / np.linalg.norm(w)
    clipped = float(np.sum(np.abs(w[r > r1]) ** 2))
    if clipped > clip_tol:
        raise CutoffClipped(f"model eigenfunction mass {clipped:.2e} outside radius {r1:g} at h = {h:g}")
    psi = radial_gauge_difference(gauge, landau_gauge(model), center, X1, X2)
    v = cutoff(r, r1, r2) * np.exp(1j * psi / h) * w
    v = v / np.linalg.norm(v)
    op = op if op is not None else assemble(fs, gauge, grid, h, check_resolution=False)
    res = residual(op, v, mu)
    return Quasimode(v, mu, res, Recipe.ModelRescaled, h, grid,
                     dict(center=tuple(center), j=j, lambda_model=lam, k=k, r1=r1, r2=r2, clipped_mass=clipped),
                     op)


def cylinder_separated_quasimode(params: MontgomeryParams, fullfield: FieldSpec, grid: Grid, h: float, j: int,
                                 window=(-1.0, 4.0), cut=(0.25, 0.4), clip_tol=1e-8,
                                 op: Optional[DiscreteOperator] = None) -> Quasimode:
    """Separated mode ``exp(-2 pi i p x / L) v_j(y)`` cut off in ``y``.

    ``p = select_p(h, ...)`` over the b-window, ``v_j`` is the ``j``-th
    eigenvector of the exact momentum-``p`` block of the model cylinder
    operator, and the residual is taken on the cylinder operator of the
    full field ``fullfield``.
    """
    params = replace(params, h=h)
    p, bval = select_p(h, params, *window)
    fib = cylinder_fiber(params, p, grid)
    spec = lowest_eigenpairs(fib, j)
    mu = float(spec.eigenvalues[j - 1])
    vy = spec.eigenvectors[:, j - 1].real
    vy = vy / np.linalg.norm(vy)
    r1, r2 = _radii(cut, fullfield)
    _check_support(grid, (0.0, 0.0), r2, axes=(1,))
    yax = grid.axis(1)
    clipped = float(np.sum(vy[np.abs(yax) > r1] ** 2))
    if clipped > clip_tol:
        raise CutoffClipped(f"fiber eigenfunction mass {clipped:.2e} outside |y| = {r1:g} at h = {h:g}")
    x, y = grid.coords()
    ny = len(yax)
    vfull = np.tile(vy * cutoff(np.abs(yax), r1, r2), len(grid.axis(0)))
    v = np.exp(-2j * math.pi * p * x / params.L) * vfull
    v = v / np.linalg.norm(v)
    op = op if op is not None else cylinder_operator(params, grid, fs=fullfield)
    res = residual(op, v, mu)
    assert ny * len(grid.axis(0)) == op.n
    return Quasimode(v, mu, res, Recipe.CylinderSeparated, h, grid,
                     dict(p=p, b=bval, j=j, beta=2 * math.pi * h * p / params.L - params.alpha1,
                          r1=r1, r2=r2, clipped_mass=clipped, band_value=mu / h ** ((2 * params.k + 2) / (params.k + 2))),
                     op)


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    jackknife_spread: float
    jackknife_se: float
    jackknife_slopes: np.ndarray = field(repr=False)

    @property
    def flagged(self):
        return self.jackknife_spread > 0.05


def _lsq(lx, ly):
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return coef


def fit_residual_slope(pairs) -> SlopeFit:
    """Least-squares slope of ``log residual`` against ``log h``.

    Needs at least 4 samples spanning 3 octaves in ``h``.  The jackknife
    spread is the largest change of the slope when one sample is dropped.
    """
    arr = np.asarray(pairs, float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise InsufficientSamples("need at least 4 (h, residual) pairs")
    h, r = arr[:, 0], arr[:, 1]
    if np.any(h <= 0) or np.any(r <= 0):
        raise InsufficientSamples("h and residual must be positive")
    if math.log2(h.max() / h.min()) < 3 - 1e-9:
        raise InsufficientSamples("h-samples must span at least 3 octaves")
    lx, ly = np.log(h), np.log(r)
    s, c = _lsq(lx, ly)
    pred = s * lx + c
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = len(h)
    jk = np.array([_lsq(np.delete(lx, i), np.delete(ly, i))[0] for i in range(n)])
    spread = float(np.max(np.abs(jk - s)))
    se = float(math.sqrt((n - 1) / n * np.sum((jk - jk.mean()) ** 2)))
    return SlopeFit(float(s), float(c), float(r2), spread, se, jk)
