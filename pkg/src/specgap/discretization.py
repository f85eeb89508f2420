"""Gauges and gauge-covariant finite-difference Hamiltonians.

The discrete operator is ``D^* D`` where ``D`` is the link derivative

    (D u)_{p->q} = (i h / dx) (U_pq u_q - u_p),   U_pq = exp(-(i/h) int_p^q A.dl)

so that it is Hermitian and positive semidefinite by construction.  Link
integrals use the midpoint rule for the base potential; an added gradient
``d phi`` contributes the exact difference ``phi(q) - phi(p)``, which makes
gauge shifts act as an exact diagonal unitary conjugation.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import GridTooCoarse, NonHermitianAssembly, QuadratureFailure, TruncationTooSmall
from .fields import FieldKind, FieldSpec


class Boundary(enum.Enum):
    Dirichlet = "Dirichlet"
    PeriodicX_DirichletY = "PeriodicX_DirichletY"


class GaugeTag(enum.Enum):
    Landau = "Landau"
    ModelPolynomial = "ModelPolynomial"
    ShiftedByGradient = "ShiftedByGradient"


class OperatorTag(enum.Enum):
    FullH = "FullH"
    DirichletWell = "DirichletWell"
    Cylinder = "Cylinder"
    ModelK = "ModelK"
    Montgomery1D = "Montgomery1D"


@dataclass(frozen=True)
class Grid:
    """Tensor grid on a box.

    Each axis ``[lower, upper]`` is split into ``intervals`` cells.  Dirichlet
    axes carry the interior nodes only; the periodic x-axis carries
    ``intervals`` nodes starting at ``lower`` (the seam node ``upper`` is
    identified with ``lower``).  Nodes are ordered with x as the slow index.
    ``mask`` (2D boolean over the full tensor grid) deletes nodes, i.e.
    imposes Dirichlet conditions on an arbitrary node subset.
    """

    lower: tuple
    upper: tuple
    intervals: tuple
    boundary: Boundary = Boundary.Dirichlet
    mask: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @classmethod
    def interval(cls, a, b, n):
        return cls((float(a),), (float(b),), (int(n),))

    @classmethod
    def rectangle(cls, xlim, ylim, nx, ny=None):
        ny = nx if ny is None else ny
        return cls((float(xlim[0]), float(ylim[0])), (float(xlim[1]), float(ylim[1])), (int(nx), int(ny)))

    @classmethod
    def cylinder(cls, L, Y, nx, ny, x0=0.0):
        """``S^1_L x (-Y, Y)``, periodic in x."""
        return cls((float(x0), -float(Y)), (float(x0) + float(L), float(Y)), (int(nx), int(ny)),
                   Boundary.PeriodicX_DirichletY)

    @classmethod
    def with_spacing(cls, lower, upper, spacing, boundary=Boundary.Dirichlet):
        """Grid whose axes are rounded out so that the spacing is exact."""
        n = []
        lo, hi = [], []
        for a, b in zip(lower, upper):
            m = int(math.ceil((b - a) / spacing - 1e-9))
            c = 0.5 * (a + b)
            lo.append(c - 0.5 * m * spacing)
            hi.append(c + 0.5 * m * spacing)
            n.append(m)
        return cls(tuple(lo), tuple(hi), tuple(n), boundary)

    @property
    def dim(self):
        return len(self.intervals)

    @property
    def spacings(self):
        return tuple((b - a) / n for a, b, n in zip(self.lower, self.upper, self.intervals))

    @property
    def periodic_x(self):
        return self.boundary is Boundary.PeriodicX_DirichletY

    def axis(self, i):
        a, b, n = self.lower[i], self.upper[i], self.intervals[i]
        if i == 0 and self.periodic_x:
            return a + (b - a) / n * np.arange(n)
        j = np.arange(1, n)
        # convex-combination form keeps symmetric intervals exactly symmetric
        return (a * (n - j) + b * j) / n

    @property
    def shape(self):
        return tuple(len(self.axis(i)) for i in range(self.dim))

    @property
    def n_full(self):
        return int(np.prod(self.shape))

    @property
    def n_total(self):
        if self.mask is None:
            return self.n_full
        return int(np.count_nonzero(self.mask))

    def full_coords(self):
        axes = [self.axis(i) for i in range(self.dim)]
        if self.dim == 1:
            return axes[0], np.zeros_like(axes[0])
        x, y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return x.ravel(), y.ravel()

    def coords(self):
        """Coordinates of active nodes, in matrix order."""
        x, y = self.full_coords()
        if self.mask is None:
            return x, y
        m = self.mask.ravel()
        return x[m], y[m]

    def active_index(self):
        if self.mask is None:
            return np.arange(self.n_full)
        return np.flatnonzero(self.mask.ravel())

    def with_mask(self, mask):
        mask = np.asarray(mask, bool).reshape(self.shape)
        return replace(self, mask=mask)

    def refined(self, factor=2):
        if self.mask is not None:
            raise ValueError("cannot refine a masked grid; rebuild the mask on the refined grid")
        return replace(self, intervals=tuple(n * factor for n in self.intervals))

    def scaled(self, alpha):
        return replace(self, lower=tuple(alpha * a for a in self.lower),
                       upper=tuple(alpha * b for b in self.upper))

    def to_grid(self, values):
        """Scatter an active-node vector onto the full tensor shape (zeros elsewhere)."""
        out = np.zeros(self.n_full, dtype=np.asarray(values).dtype)
        out[self.active_index()] = values
        return out.reshape(self.shape)

    def same_nodes(self, other):
        if self != other:
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        return self.mask is None or bool(np.array_equal(self.mask, other.mask))


@dataclass(frozen=True)
class GaugeField:
    """Vector potential ``(A1, A2)`` plus an optional exact gradient ``d phi``.

    ``a1``/``a2`` describe the base potential; ``jac`` returns its Jacobian
    ``[[dA1/dx, dA1/dy], [dA2/dx, dA2/dy]]`` in closed form when available.
    """

    a1: Callable
    a2: Callable
    tag: GaugeTag
    jac: Optional[Callable] = field(default=None, compare=False)
    phi: Optional[Callable] = field(default=None, compare=False)
    grad_phi: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        a1 = self.a1(x, y) + 0.0 * y
        a2 = self.a2(x, y) + 0.0 * x
        if self.grad_phi is not None:
            g1, g2 = self.grad_phi(x, y)
            a1, a2 = a1 + g1, a2 + g2
        return a1, a2

    def shifted(self, phi, grad_phi):
        """Gauge ``A + d phi``; composes with an existing shift."""
        if self.phi is not None:
            p0, g0 = self.phi, self.grad_phi
            phi_new = lambda x, y: p0(x, y) + phi(x, y)
            grad_new = lambda x, y: tuple(a + b for a, b in zip(g0(x, y), grad_phi(x, y)))
        else:
            phi_new, grad_new = phi, grad_phi
        return replace(self, phi=phi_new, grad_phi=grad_new, tag=GaugeTag.ShiftedByGradient)


def polynomial_function(coeffs):
    """``phi = sum c x^i y^j`` and its gradient, from ``{(i, j): c}``."""
    table = tuple(((int(i), int(j)), float(c)) for (i, j), c in dict(coeffs).items())

    def phi(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return sum(c * x**i * y**j for (i, j), c in table) + 0.0 * x * y

    def grad(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        gx = sum(c * i * x ** max(i - 1, 0) * y**j for (i, j), c in table if i) + 0.0 * x * y
        gy = sum(c * j * x**i * y ** max(j - 1, 0) for (i, j), c in table if j) + 0.0 * x * y
        return gx, gy

    return phi, grad


_GL40 = np.polynomial.legendre.leggauss(40)
_GL80 = np.polynomial.legendre.leggauss(80)


def _quad_x(b, x, y):
    """``int_0^x b(s, y) ds`` by two Gauss-Legendre orders."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    vals = []
    for nodes, weights in (_GL40, _GL80):
        s = 0.5 * x[..., None] * (nodes + 1)
        vals.append(0.5 * x * np.sum(weights * b(s, y[..., None]), axis=-1))
    err = np.max(np.abs(vals[1] - vals[0]) / (1 + np.abs(vals[1]))) if vals[1].size else 0.0
    if err > 1e-10:
        raise QuadratureFailure(f"Landau-gauge quadrature did not converge (rel. difference {err:.2e})")
    return vals[1]


def landau_gauge(fs: FieldSpec, alpha1: float = 0.0) -> GaugeField:
    """Gauge with ``dA = b dx^dy`` and one vanishing component.

    Planar fields get ``A = (0, int_0^x b)``.  Cylinder fields depending on
    y get ``A = (-alpha1 - int_0^y b, 0)``, periodic along the circle.
    """
    zero = lambda x, y: 0.0 * np.asarray(x, float) * np.asarray(y, float)
    if fs.kind is FieldKind.LineWellCylinder:
        F, prof = fs.antideriv, fs.antideriv_dy
        if fs.axis == "y":
            a1 = lambda x, y: -alpha1 - F(np.asarray(y, float)) + 0.0 * np.asarray(x, float)

            def jac(x, y):
                z = zero(x, y)
                return np.array([[z, -prof(np.asarray(y, float)) + z], [z, z]])

            return GaugeField(a1, zero, GaugeTag.Landau, jac, name=f"landau[{fs.name}]")
        a2 = lambda x, y: F(np.asarray(x, float)) + 0.0 * np.asarray(y, float)

        def jac(x, y):
            z = zero(x, y)
            return np.array([[z, z], [prof(np.asarray(x, float)) + z, z]])

        return GaugeField(zero, a2, GaugeTag.Landau, jac, name=f"landau[{fs.name}]")

    if fs.antideriv is not None:
        a2, a2_dy = fs.antideriv, fs.antideriv_dy
    else:
        a2 = lambda x, y: _quad_x(fs.b, x, y)
        eta = 1e-4
        a2_dy = lambda x, y: (_quad_x(fs.b, x, np.asarray(y) + eta) - _quad_x(fs.b, x, np.asarray(y) - eta)) / (2 * eta)
    tag = GaugeTag.ModelPolynomial if fs.kind is FieldKind.PolynomialModel else GaugeTag.Landau

    def jac(x, y):
        z = zero(x, y)
        return np.array([[z, z], [fs(x, y) + z, a2_dy(x, y) + z]])

    return GaugeField(zero, a2, tag, jac, name=f"landau[{fs.name}]")


def curl_deviation(fs: FieldSpec, gauge: GaugeField, x, y, eta=1e-3):
    """Max ``|dA2/dx - dA1/dy - b|`` relative to ``max |b|`` at sample points.

    Uses fourth-order central differences of the full potential.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)

    def d(f, dx, dy):
        return (8 * (f(x + dx, y + dy) - f(x - dx, y - dy))
                - (f(x + 2 * dx, y + 2 * dy) - f(x - 2 * dx, y - 2 * dy))) / (12 * eta)

    a1 = lambda u, v: gauge(u, v)[0]
    a2 = lambda u, v: gauge(u, v)[1]
    curl = d(a2, eta, 0.0) - d(a1, 0.0, eta)
    bb = fs(x, y)
    scale = max(float(np.max(np.abs(bb))), 1e-300)
    return float(np.max(np.abs(curl - bb))) / scale


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix = field(repr=False)
    h: float
    grid: Grid
    gauge: Optional[GaugeField]
    tag: OperatorTag
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def norm_bound(self):
        """Max absolute row sum, an upper bound for the spectral norm."""
        return float(abs(self.matrix).sum(axis=1).max())

    def hermitian_defect(self):
        d = self.matrix - self.matrix.getH()
        return float(abs(d).max()) if d.nnz else 0.0


def _link_phases(grid, h, gauge, axis):
    """Peierls phases ``theta`` for links along ``axis`` on the full tensor grid.

    Returns ``(p, q, theta)`` with node indices into the full grid.
    """
    shape = grid.shape
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    ax = [grid.axis(i) for i in range(grid.dim)]
    d = grid.spacings[axis]
    periodic = axis == 0 and grid.periodic_x
    if grid.dim == 1:
        p = idx[:-1]
        q = idx[1:]
        xs = ax[0]
        xp, xq = xs[:-1], xs[1:]
        yp = yq = np.zeros_like(xp)
        xm, ym = xp + d / 2, yp
    else:
        X, Y = np.meshgrid(ax[0], ax[1], indexing="ij")
        sl_p = [slice(None), slice(None)]
        sl_q = [slice(None), slice(None)]
        sl_p[axis] = slice(None, -1)
        sl_q[axis] = slice(1, None)
        sl_p, sl_q = tuple(sl_p), tuple(sl_q)
        p, q = idx[sl_p].ravel(), idx[sl_q].ravel()
        xp, yp = X[sl_p].ravel(), Y[sl_p].ravel()
        xq, yq = X[sl_q].ravel(), Y[sl_q].ravel()
        if periodic:
            p = np.concatenate([p, idx[-1, :]])
            q = np.concatenate([q, idx[0, :]])
            xp = np.concatenate([xp, X[-1, :]])
            yp = np.concatenate([yp, Y[-1, :]])
            xq = np.concatenate([xq, X[0, :]])
            yq = np.concatenate([yq, Y[0, :]])
        if axis == 0:
            xm, ym = xp + d / 2, yp
        else:
            xm, ym = xp, yp + d / 2
    if gauge is None:
        theta = np.zeros(p.shape)
    else:
        comp = gauge.a1 if axis == 0 else gauge.a2
        theta = comp(xm, ym) * d / h + 0.0 * xm
        if gauge.phi is not None:
            theta = theta + (gauge.phi(xq, yq) - gauge.phi(xp, yp)) / h
    return p, q, theta


def peierls_matrix(grid: Grid, h: float, gauge: Optional[GaugeField], potential=None):
    """Assemble ``D^* D`` (+ diagonal potential) on the active nodes of ``grid``."""
    n = grid.n_full
    diag = np.full(n, 2 * h * h * sum(1.0 / d**2 for d in grid.spacings))
    rows, cols, vals = [], [], []
    for axis in range(grid.dim):
        p, q, theta = _link_phases(grid, h, gauge, axis)
        t = -(h * h / grid.spacings[axis] ** 2) * np.exp(-1j * theta)
        rows += [p, q]
        cols += [q, p]
        vals += [t, np.conj(t)]
    if potential is not None:
        x, y = grid.full_coords()
        diag = diag + np.broadcast_to(potential(x, y), (n,))
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.astype(complex))
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    if grid.mask is not None:
        keep = grid.active_index()
        m = m[keep][:, keep]
    m.sum_duplicates()
    m.sort_indices()
    return m


def grid_rule(h, k):
    """Magnetic length scale ``h^{1/(k+2)}`` tied to the well order."""
    return h ** (1.0 / (k + 2))


def _check_resolution(grid, h, k):
    scale = grid_rule(h, k)
    dmax = max(grid.spacings)
    if dmax > scale:
        raise GridTooCoarse(f"spacing {dmax:.4g} exceeds h^(1/(k+2)) = {scale:.4g}")
    if dmax > scale / 8:
        warnings.warn(f"spacing {dmax:.4g} exceeds h^(1/(k+2))/8 = {scale / 8:.4g}", stacklevel=3)


def assemble(fs: Optional[FieldSpec], gauge: Optional[GaugeField], grid: Grid, h: float,
             tag: OperatorTag = OperatorTag.FullH, k: Optional[int] = None, potential=None,
             check_resolution: bool = True) -> DiscreteOperator:
    """Gauge-covariant 3-point (1D) / 5-point (2D) stencil for ``(ih d + A)^*(ih d + A)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    if check_resolution:
        kk = k if k is not None else (fs.k if fs is not None else 0)
        _check_resolution(grid, h, kk)
    m = peierls_matrix(grid, h, gauge, potential)
    op = DiscreteOperator(m, float(h), grid, gauge, tag)
    defect = op.hermitian_defect()
    if defect != 0.0:
        raise NonHermitianAssembly(f"assembled matrix is not Hermitian (defect {defect:.3e})")
    return op


def montgomery_extent(k, beta, h=1.0):
    """Half-width ``Y`` of the truncated line for ``H(h, beta)``.

    ``Y = 2 ((k+1)! (|beta| + 10))^{1/(k+1)}`` at ``h = 1``, carried to other
    ``h`` by the dilation ``y -> h^{1/(k+2)} y``.
    """
    bb = abs(beta) * h ** (-(k + 1) / (k + 2))
    return h ** (1.0 / (k + 2)) * 2.0 * (math.factorial(k + 1) * (bb + 10.0)) ** (1.0 / (k + 1))


def schrodinger_1d(grid: Grid, h: float, potential, tag=OperatorTag.Montgomery1D, meta=None):
    """Real symmetric ``-h^2 d^2/dy^2 + V(y)`` with the 3-point stencil."""
    if grid.dim != 1:
        raise ValueError("schrodinger_1d needs a 1D grid")
    y = grid.axis(0)
    d = grid.spacings[0]
    kin = h * h / (d * d)
    main = 2 * kin + potential(y)
    off = np.full(len(y) - 1, -kin)
    m = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    return DiscreteOperator(m, float(h), grid, None, tag, dict(meta or {}))


def montgomery_potential(beta, k, beta1=1.0):
    fk1 = math.factorial(k + 1)
    return lambda y: (beta - beta1 * np.asarray(y, float) ** (k + 1) / fk1) ** 2


def assemble_montgomery_1d(h: float, beta: float, k: int, grid: Grid, beta1: float = 1.0,
                           check_truncation: bool = True) -> DiscreteOperator:
    """``H(h, beta) = -h^2 d^2/dy^2 + (beta - beta1 y^{k+1}/(k+1)!)^2`` on a Dirichlet line."""
    op = schrodinger_1d(grid, h, montgomery_potential(beta, k, beta1),
                        meta={"beta": float(beta), "k": int(k), "beta1": float(beta1)})
    if check_truncation:
        boundary_mass(op, raise_above=1e-8)
    return op


def boundary_mass(op: DiscreteOperator, raise_above=None):
    """Probability mass of the ground state on the two boundary-adjacent nodes."""
    from scipy.linalg import eigh_tridiagonal

    m = op.matrix
    d = m.diagonal().real
    e = m.diagonal(1).real
    _, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    v = v[:, 0]
    mass = float((v[0] ** 2 + v[-1] ** 2) / np.dot(v, v))
    if raise_above is not None and mass > raise_above:
        raise TruncationTooSmall(f"ground-state mass {mass:.2e} at the truncation boundary")
    return mass


def dilation_check(k: int, h: float, beta: float, alpha: float, grid: Grid) -> float:
    """Max entrywise ``|M(h,b;G) - alpha^{-(2k+2)} M(alpha^{k+2} h, alpha^{k+1} b; alpha G)|``."""
    m1 = assemble_montgomery_1d(h, beta, k, grid, check_truncation=False).matrix
    m2 = assemble_montgomery_1d(alpha ** (k + 2) * h, alpha ** (k + 1) * beta, k, grid.scaled(alpha),
                                check_truncation=False).matrix
    diff = m1 - alpha ** (-(2 * k + 2)) * m2
    return float(abs(diff).max()) if diff.nnz else 0.0


def write_triplets(op: DiscreteOperator, path):
    """Sparse triplet text export: one ``row col re im`` line per stored entry."""
    m = op.matrix.tocoo()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r, c, v in zip(m.row, m.col, m.data):
            v = complex(v)
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_triplets(path, n=None):
    data = np.loadtxt(path, ndmin=2)
    r = data[:, 0].astype(int)
    c = data[:, 1].astype(int)
    v = data[:, 2] + 1j * data[:, 3]
    n = n or int(max(r.max(), c.max()) + 1)
    return sp.csr_matrix((v, (r, c)), shape=(n, n))
