"""Reusable experiment drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .discretization import Grid, assemble, assemble_montgomery_1d, dilation_check, landau_gauge
from .eigensolve import lowest_eigenpairs, richardson_refine
from .gaps import eigenvalues_below, supercell_grid, well_grid
from .models import MontgomeryParams, cylinder_grid, model_grid, model_operator_2d, montgomery_eigenvalues
from .quasimodes import (
    cell_unit,
    cylinder_separated_quasimode,
    level_point,
    model_rescaled_quasimode,
    point_gaussian_quasimode,
)


def geometric_sweep(h_max, n=7, ratio=math.sqrt(2.0)):
    """``n`` values decreasing from ``h_max`` by ``ratio``."""
    return [h_max / ratio**i for i in range(n)]


def _even(n):
    n = int(math.ceil(n))
    return n + n % 2


def point_gaussian_grid(fs, h, point, r2, factor=1.0, exponent=0.75):
    """Square box around ``point`` with spacing ``factor * h^exponent`` and a 5-cell margin."""
    d = factor * h**exponent
    R = r2 + 5 * d
    n = _even(2 * R / d)
    R = 0.5 * n * d
    return Grid.rectangle((point[0] - R, point[0] + R), (point[1] - R, point[1] + R), n)


def model_rescaled_grid(fs, h, center, r2, per_unit=16):
    """Well-cell box with spacing ``h^{1/(k+2)} / per_unit``."""
    d = h ** (1.0 / (fs.k + 2)) / per_unit
    R = max(0.5 * cell_unit(fs), r2 + 5 * d)
    n = _even(2 * R / d)
    R = 0.5 * n * d
    return Grid.rectangle((center[0] - R, center[0] + R), (center[1] - R, center[1] + R), n)


def quasimode_sweep(recipe, fs, hs, cut=(0.25, 0.4), clip_tol=1e-8, target_mu=1.5, j=1, per_unit=16,
                    factor=1.0, exponent=0.75, window=(0.0, 1.0), params: MontgomeryParams = None):
    """Build one quasimode per ``h`` with the grid policy of ``recipe``."""
    out = []
    u = cell_unit(fs)
    r2 = cut[1] * u
    if recipe == "point_gaussian":
        ga = landau_gauge(fs)
        center = tuple(fs.wells[0]) if fs.wells else (0.0, 0.0)
        point, _ = level_point(fs, center, target_mu)
        for h in hs:
            g = point_gaussian_grid(fs, h, point, r2, factor, exponent)
            out.append(point_gaussian_quasimode(fs, ga, g, h, target_mu, point=point, cut=cut, clip_tol=clip_tol))
    elif recipe == "model_rescaled":
        ga = landau_gauge(fs)
        center = tuple(fs.wells[0]) if fs.wells else (0.0, 0.0)
        for h in hs:
            g = model_rescaled_grid(fs, h, center, r2, per_unit)
            out.append(model_rescaled_quasimode(fs, ga, g, h, j, center=center, cut=cut, clip_tol=clip_tol))
    elif recipe == "cylinder":
        params = params or MontgomeryParams(k=fs.k, beta1=fs.beta1, L=fs.periodic_length)
        for h in hs:
            p = replace(params, h=h)
            Y = max(0.5 * u, r2 + 5 * h ** (1.0 / (params.k + 2)) / 32)
            g = cylinder_grid(p, Y, fs, per_unit=32)
            out.append(cylinder_separated_quasimode(params, fs, g, h, j, window=window, cut=cut, clip_tol=clip_tol))
    else:
        raise ValueError(f"unknown recipe {recipe!r}")
    return out


def supercell_operator(fs, h, N=3, per_unit=16):
    g = supercell_grid(fs, h, N, per_unit)
    return assemble(fs, landau_gauge(fs), g, h)


def supercell_spectrum(fs, h, threshold, N=3, per_unit=16, richardson=False, m0=24):
    """Supercell eigenvalues reaching past ``threshold`` (optionally Richardson refined)."""
    op = supercell_operator(fs, h, N, per_unit)
    coarse = eigenvalues_below(op, threshold, m0=m0)
    if not richardson:
        return coarse
    m = len(coarse.eigenvalues)
    ga = landau_gauge(fs)
    return richardson_refine(lambda g: assemble(fs, ga, g, h), op.grid, m)


def well_spectrum(fs, h, level, threshold, N=3, per_unit=16, m0=8):
    """Dirichlet operator on the sublevel component ``{|b| < level}`` of the central well."""
    g = supercell_grid(fs, h, N, per_unit)
    wg = well_grid(fs, g, level)
    op = assemble(fs, landau_gauge(fs), wg, h)
    return eigenvalues_below(op, threshold, m0=m0)


def model_scaling_sweep(fs_model, hs, m=1, halfwidth=2.5, per_unit=16, richardson=True):
    """Lowest ``m`` eigenvalues of ``K^h`` for each ``h`` on the dilated reference box."""
    out = []
    for h in hs:
        g = model_grid(fs_model, h, halfwidth, per_unit)
        build = lambda gg, h=h: model_operator_2d(fs_model, h, gg)
        out.append(richardson_refine(build, g, m) if richardson else lowest_eigenpairs(build(g), m))
    return out


def identity_table(ks=(1, 2), alphas=(0.5, 2.0, 3.0), hs=(0.1, 0.05, 0.02), betas=(-0.5, 0.0, 0.3), n=400):
    """``dilation_check`` over a parameter lattice; rows ``(k, h, beta, alpha, deviation, scale)``."""
    rows = []
    for k in ks:
        for h in hs:
            for beta in betas:
                Y = 2.0 * h ** (1.0 / (k + 2))
                g = Grid.interval(-Y, Y, n)
                scale = assemble_montgomery_1d(h, beta, k, g, check_truncation=False).norm_bound()
                for a in alphas:
                    rows.append((k, h, beta, a, dilation_check(k, h, beta, a, g), scale))
    return rows


def montgomery_scaling_rows(hs=(0.1, 0.05, 0.02), beta=0.3, k=1, m=5):
    """Compare ``eigs H(h, beta)`` with ``h^e eigs H(1, h^{-(k+1)/(k+2)} beta)`` (Richardson refined)."""
    e = (2 * k + 2) / (k + 2)
    rows = []
    for h in hs:
        lhs = montgomery_eigenvalues(h, beta, k, m).eigenvalues
        rhs = h**e * montgomery_eigenvalues(1.0, h ** (-(k + 1) / (k + 2)) * beta, k, m).eigenvalues
        rows.append((h, lhs, rhs, float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))))
    return rows

