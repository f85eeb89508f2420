"""Explicit operator families: the Montgomery line family, the cylinder operator
and the polynomial model operator at a point zero.

Scaling facts used throughout (``c = h^{1/(k+2)}``):

* ``H(h, beta)`` is unitarily equivalent to ``h^{(2k+2)/(k+2)} H(1, h^{-(k+1)/(k+2)} beta)``;
* the polynomial model ``K^h`` is unitarily equivalent to ``h^{(2k+2)/(k+2)} K^1``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import (
    DiscreteOperator,
    Grid,
    OperatorTag,
    assemble,
    assemble_montgomery_1d,
    dilation_check,
    landau_gauge,
    montgomery_extent,
    schrodinger_1d,
)
from .eigensolve import BandFunctionTable, lowest_eigenpairs, richardson_refine, track_bands
from .errors import NoAdmissibleInteger
from .fields import FieldKind, FieldSpec, polynomial, polynomial_line

__all__ = [
    "MontgomeryParams",
    "dilation_check",
    "montgomery_grid",
    "montgomery_bands",
    "montgomery_eigenvalues",
    "select_p",
    "cylinder_operator",
    "cylinder_fiber",
    "model_operator_2d",
    "model_grid",
    "cylinder_grid",
    "reference_spectrum",
]


@dataclass(frozen=True)
class MontgomeryParams:
    k: int = 1
    h: float = 1.0
    beta: float = 0.0
    alpha1: float = 0.0
    L: float = 2 * math.pi
    beta1: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.h <= 0 or self.L <= 0:
            raise ValueError("h and L must be positive")

    @property
    def scale(self):
        """``beta1^{1/(k+2)}``: ``H_{beta1}(h, b) = s^2 H(h, b / s)`` up to ``y -> y / s``."""
        return abs(self.beta1) ** (1.0 / (self.k + 2))


def _dyadic(x):
    """Largest power of two not exceeding ``x``."""
    return 2.0 ** math.floor(math.log2(x))


def montgomery_grid(k, beta_max=0.0, h=1.0, spacing=None, extent=None):
    """Dirichlet line for ``H(h, beta)``, ``|beta| <= beta_max``.

    The half-width follows :func:`montgomery_extent`; the default spacing is
    the dyadic number below ``h^{1/(k+2)} / 128``.
    """
    Y = extent if extent is not None else montgomery_extent(k, beta_max, h)
    d = spacing if spacing is not None else _dyadic(h ** (1.0 / (k + 2)) / 128)
    n = int(math.ceil(2 * Y / d))
    n += n % 2
    return Grid.interval(-n * d / 2, n * d / 2, n)


def montgomery_eigenvalues(h, beta, k, m, grid=None, beta1=1.0, richardson=True):
    """Lowest ``m`` eigenvalues of ``H(h, beta)`` (Richardson refined by default)."""
    grid = grid or montgomery_grid(k, abs(beta), h)
    build = lambda g: assemble_montgomery_1d(h, beta, k, g, beta1=beta1)
    if richardson:
        return richardson_refine(build, grid, m)
    return lowest_eigenpairs(build(grid), m)


def montgomery_bands(k: int, b_grid, J: int, spacing=None, richardson=True) -> BandFunctionTable:
    """Band functions ``mu_j(b)``: lowest ``J`` eigenvalues of ``H(1, b)``, branch tracked."""
    if J > 12:
        raise ValueError("J must be <= 12")
    b_grid = np.asarray(b_grid, float)
    if np.any(np.diff(b_grid) <= 0):
        raise ValueError("b_grid must be sorted ascending")
    grid = montgomery_grid(k, float(np.max(np.abs(b_grid))), 1.0, spacing)
    spectra = [montgomery_eigenvalues(1.0, b, k, J, grid, richardson=richardson) for b in b_grid]
    return track_bands(spectra, b_grid, k)


def select_p(h: float, params: MontgomeryParams, b1: float, b2: float):
    """Smallest integer ``p`` with ``b1 < h^{-(k+1)/(k+2)} beta(h) / s < b2``.

    ``beta(h) = 2 pi h p / L - alpha1`` and ``s = beta1^{1/(k+2)}`` (``s = 1``
    for the unit-coefficient family).  Returns ``(p, achieved_b)``.
    """
    if not b1 < b2:
        raise ValueError("need b1 < b2")
    k, L, a1, s = params.k, params.L, params.alpha1, params.scale
    e = h ** (-(k + 1) / (k + 2))

    def bval(p):
        return e * (2 * math.pi * h * p / L - a1) / s

    lo = L / (2 * math.pi * h) * (a1 + s * b1 / e)
    hi = L / (2 * math.pi * h) * (a1 + s * b2 / e)
    p = math.floor(lo)
    while bval(p) <= b1:
        p += 1
    if p >= hi or not bval(p) < b2:
        h_max = (L * s * (b2 - b1) / (2 * math.pi)) ** (k + 2)
        raise NoAdmissibleInteger(
            f"no integer p in ({lo:.6g}, {hi:.6g}) at h = {h:g}; any h <= {h_max:.6g} admits one",
            h_max=h_max)
    return p, bval(p)


def cylinder_field(params: MontgomeryParams) -> FieldSpec:
    return polynomial_line(params.beta1, params.k, params.L)


def cylinder_operator(params: MontgomeryParams, grid: Grid, fs: FieldSpec = None) -> DiscreteOperator:
    """``-h^2 d_y^2 + (ih d_x + A1(y))^2`` on ``S^1_L x (-Y, Y)`` via Peierls phases.

    The gauge is ``A1 = -alpha1 - int_0^y b``, so momentum-``p`` modes
    ``exp(-2 pi i p x / L) v(y)`` see ``(beta(h) - int_0^y b)^2`` with
    ``beta(h) = 2 pi h p / L - alpha1``.  Without ``fs`` the field is the
    model ``beta1 y^k / k!``.
    """
    if not grid.periodic_x:
        raise ValueError("cylinder operator needs a PeriodicX_DirichletY grid")
    if abs((grid.upper[0] - grid.lower[0]) - params.L) > 1e-12 * params.L:
        raise ValueError("grid x-extent must equal L")
    fs = fs or cylinder_field(params)
    gauge = landau_gauge(fs, alpha1=params.alpha1)
    op = assemble(fs, gauge, grid, params.h, tag=OperatorTag.Cylinder, k=params.k, check_resolution=False)
    op.meta.update(params=params)
    return op


def cylinder_fiber(params: MontgomeryParams, p: int, grid: Grid, fs: FieldSpec = None) -> DiscreteOperator:
    """Exact momentum-``p`` block of :func:`cylinder_operator` as a 1D operator.

    The x-part of the 5-point stencil acting on ``exp(-2 pi i p x / L)``
    gives the potential ``(2 h^2/dx^2)(1 - cos(dx (beta(h) - F(y)) / h))``,
    which tends to ``(beta(h) - F(y))^2`` as ``dx -> 0``.
    """
    fs = fs or cylinder_field(params)
    h = params.h
    dx = grid.spacings[0]
    beta = 2 * math.pi * h * p / params.L - params.alpha1
    F = fs.antideriv
    pot = lambda y: (2 * h * h / dx**2) * (1 - np.cos(dx * (beta - F(y)) / h))
    line = Grid.interval(grid.lower[1], grid.upper[1], grid.intervals[1])
    return schrodinger_1d(line, h, pot, tag=OperatorTag.Montgomery1D, meta={"p": p, "beta": beta})


def cylinder_grid(params: MontgomeryParams, Y: float, fs: FieldSpec = None, per_unit: int = 32,
                  phase_max: float = math.pi / 2, beta: float = None) -> Grid:
    """Cylinder grid ``S^1_L x (-Y, Y)`` resolving the operator at ``params.h``.

    ``dy = h^{1/(k+2)} / per_unit``; ``nx`` is chosen so that the x-link phase
    ``dx |beta - F(y)| / h`` stays below ``phase_max`` on the whole strip,
    which keeps folded momenta from producing spurious low-lying states.
    """
    fs = fs or cylinder_field(params)
    h = params.h
    ys = np.linspace(-Y, Y, 2001)
    beta = params.beta if beta is None else beta
    amax = float(np.max(np.abs(beta - params.alpha1 - fs.antideriv(ys)))) + 2 * math.pi * h / params.L
    nx = max(8, int(math.ceil(params.L * amax / (h * phase_max))))
    nx += nx % 2
    dy = h ** (1.0 / (params.k + 2)) / per_unit
    ny = int(math.ceil(2 * Y / dy))
    ny += ny % 2
    return Grid.cylinder(params.L, Y, nx, ny)


def model_grid(fs: FieldSpec, h: float, halfwidth=3.0, per_unit=32, center=(0.0, 0.0)):
    """Square Dirichlet box for ``K^h``: half-width ``halfwidth * h^{1/(k+2)}``.

    ``per_unit`` intervals per unit of the magnetic length ``h^{1/(k+2)}``.
    """
    ell = h ** (1.0 / (fs.k + 2))
    R = halfwidth * ell
    n = int(round(2 * halfwidth * per_unit))
    n += n % 2
    return Grid.rectangle((center[0] - R, center[0] + R), (center[1] - R, center[1] + R), n)


def model_operator_2d(fs: FieldSpec, h: float, grid: Grid) -> DiscreteOperator:
    """``K^h = (ih d + A0)^*(ih d + A0)`` for a homogeneous polynomial field."""
    if fs.kind is not FieldKind.PolynomialModel:
        raise ValueError("model operator needs a PolynomialModel field")
    return assemble(fs, landau_gauge(fs), grid, h, tag=OperatorTag.ModelK, check_resolution=False)


def _cache_path():
    env = os.environ.get("SPECGAP_CACHE")
    base = Path(env) if env else Path.home() / ".cache" / "specgap"
    return base / "model_reference.json"


def _cache_key(fs, m, halfwidth, per_unit):
    blob = json.dumps({"coeffs": [[list(ij), c] for ij, c in fs.model], "m": m, "halfwidth": halfwidth,
                       "per_unit": per_unit, "version": __version__}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def reference_spectrum(fs: FieldSpec, m: int = 10, halfwidth: float = 2.5, per_unit: int = 32,
                       use_cache: bool = True):
    """Richardson-refined lowest ``m`` eigenvalues of ``K^1`` for a polynomial field.

    Results are cached in a versioned JSON file (``$SPECGAP_CACHE`` or
    ``~/.cache/specgap``).  Returns ``(eigenvalues, error_estimates)``.
    """
    if fs.kind is not FieldKind.PolynomialModel:
        fs = polynomial({ij: c for ij, c in fs.model})
    key = _cache_key(fs, m, halfwidth, per_unit)
    path = _cache_path()
    if use_cache and path.exists():
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError):
            data = {}
        if key in data:
            rec = data[key]
            return np.array(rec["eigenvalues"]), np.array(rec["errors"])
    grid = model_grid(fs, 1.0, halfwidth, per_unit)
    spec = richardson_refine(lambda g: model_operator_2d(fs, 1.0, g), grid, m)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            data = json.loads(path.read_text()) if path.exists() else {}
        except (OSError, ValueError):
            data = {}
        data[key] = {"coeffs": [[list(ij), c] for ij, c in fs.model], "m": m, "halfwidth": halfwidth,
                     "per_unit": per_unit, "version": __version__,
                     "eigenvalues": [float(v) for v in spec.eigenvalues],
                     "errors": [float(v) for v in spec.discretization_error]}
        path.write_text(json.dumps(data, indent=1, sort_keys=True))
    return spec.eigenvalues, spec.discretization_error
