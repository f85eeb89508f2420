"""Lowest eigenpairs with residual certificates, Richardson refinement, band tracking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .discretization import DiscreteOperator, Grid
from .errors import NoConvergence

DENSE_MAX = 3000
DEFAULT_TOL = 1e-9


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    h: float
    solver_residuals: np.ndarray
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)
    discretization_error: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    def scaled(self, s):
        """Spectrum of ``s * M``."""
        err = None if self.discretization_error is None else s * self.discretization_error
        return replace(self, eigenvalues=s * self.eigenvalues, solver_residuals=s * self.solver_residuals,
                       discretization_error=err)


def _is_real_tridiagonal(m):
    if m.shape[0] < 3:
        return False
    coo = m.tocoo()
    if np.iscomplexobj(coo.data) and np.any(coo.data.imag != 0):
        return False
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def residuals(matrix, values, vectors):
    r = matrix @ vectors - vectors * values
    return np.linalg.norm(r, axis=0) / np.linalg.norm(vectors, axis=0)


def _certify(op, vals, vecs, tol, meta):
    order = np.argsort(vals)
    vals = np.asarray(vals, float)[order]
    vecs = vecs[:, order]
    res = residuals(op.matrix, vals, vecs)
    bound = tol * max(op.norm_bound(), 1e-300)
    for j, r in enumerate(res):
        if not np.isfinite(r) or r > bound:
            raise NoConvergence(j, float(r))
    return Spectrum(vals, op.h, res, vecs, meta=meta)


def lowest_eigenpairs(op: DiscreteOperator, m: int, tol: float = DEFAULT_TOL, seed: int = 0,
                      dense_max: int = DENSE_MAX, sigma: Optional[float] = None,
                      vectors: bool = True) -> Spectrum:
    """The ``m`` smallest eigenpairs of ``op`` with residual certificates.

    Real symmetric tridiagonal matrices (1D operators) go to LAPACK's
    tridiagonal bisection; matrices up to ``dense_max`` are solved densely;
    larger ones by shift-invert Lanczos around ``sigma`` (default: just
    below zero, the operators being positive semidefinite).

    Every returned pair satisfies ``|M v - lam v| <= tol * |M|``; otherwise
    :class:`NoConvergence` is raised.
    """
    n = op.n
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > max(n // 4, 1):
        raise ValueError(f"m = {m} exceeds n_total/4 = {n // 4}")
    mat = op.matrix
    if sigma is None and _is_real_tridiagonal(mat):
        d = mat.diagonal().real
        e = mat.diagonal(1).real
        vals, vecs = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, m - 1))
        return _certify(op, vals, vecs, tol, {"method": "tridiagonal"})
    if sigma is None and n <= dense_max:
        vals, vecs = sla.eigh(mat.toarray(), subset_by_index=(0, m - 1))
        return _certify(op, vals, vecs, tol, {"method": "dense"})
    return _shift_invert(op, m, tol, seed, sigma)


def eigenpairs_near(op: DiscreteOperator, target: float, m: int = 1, tol: float = DEFAULT_TOL,
                    seed: int = 0, dense_max: int = DENSE_MAX) -> Spectrum:
    """The ``m`` eigenpairs closest to ``target``."""
    n = op.n
    if n <= dense_max:
        vals, vecs = sla.eigh(op.matrix.toarray())
        idx = np.argsort(np.abs(vals - target))[:m]
        return _certify(op, vals[idx], vecs[:, idx], tol, {"method": "dense", "target": target})
    return _shift_invert(op, m, tol, seed, target)


def _shift_invert(op, m, tol, seed, sigma):
    """Shift-invert Lanczos with escalating Krylov size and one re-shift.

    Attempts, in order: default subspace at ``sigma``; a wide subspace (for
    near-degenerate clusters such as Landau levels in a box); the wide
    subspace at a shift moved further below the spectrum.
    """
    mat = op.matrix
    n = op.n
    norm = op.norm_bound()
    if sigma is None:
        sigma = -1e-6 * norm
    rng = np.random.default_rng(seed)
    dtype = mat.dtype
    v0 = rng.standard_normal(n)
    if np.iscomplexobj(mat.data):
        v0 = v0 + 1j * rng.standard_normal(n)
    wide = min(n - 1, max(60, 4 * m + 20))
    attempts = [(sigma, None), (sigma, wide), (sigma - 1e-4 * norm, wide)]
    last = None
    factors = {}
    for s, ncv in attempts:
        if s not in factors:
            shifted = (mat - s * sp.identity(n, dtype=dtype, format="csr")).tocsc()
            factors[s] = spla.splu(shifted)
        lu = factors[s]
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=dtype)
        try:
            vals, vecs = spla.eigsh(mat, k=m, sigma=s, which="LM", OPinv=opinv, v0=v0, ncv=ncv,
                                    maxiter=max(50 * m, 300), tol=0.01 * tol)
        except spla.ArpackNoConvergence as exc:
            last = exc
            continue
        try:
            return _certify(op, vals.real, vecs, tol, {"method": "shift-invert", "sigma": s, "ncv": ncv})
        except NoConvergence as exc:
            last = exc
            continue
    raise NoConvergence(getattr(last, "index", 0), getattr(last, "residual", None),
                        f"shift-invert Lanczos did not converge: {last}")


def richardson_refine(build: Callable[[Grid], DiscreteOperator], grid: Grid, m: int,
                      **solver) -> Spectrum:
    """Solve on ``grid`` and its dyadic refinement and extrapolate.

    For a second-order scheme ``lam* = (4 lam_{d/2} - lam_d) / 3`` with error
    estimate ``|lam_{d/2} - lam_d| / 3``.  Eigenvectors are those of the
    finer grid.
    """
    coarse = lowest_eigenpairs(build(grid), m, **solver)
    fine = lowest_eigenpairs(build(grid.refined()), m, **solver)
    lam = (4 * fine.eigenvalues - coarse.eigenvalues) / 3
    err = np.abs(fine.eigenvalues - coarse.eigenvalues) / 3
    meta = dict(fine.meta, coarse=coarse.eigenvalues, fine=fine.eigenvalues,
                spacing=grid.spacings)
    return Spectrum(lam, fine.h, np.maximum(coarse.solver_residuals, fine.solver_residuals),
                    fine.eigenvectors, err, meta)


@dataclass
class BandFunctionTable:
    b_samples: np.ndarray
    mu: np.ndarray  # shape (J, len(b_samples))
    k: int
    crossings_flagged: list = field(default_factory=list)
    errors: Optional[np.ndarray] = None

    @property
    def J(self):
        return self.mu.shape[0]

    def band(self, j):
        """Branch ``mu_j`` (1-based, as in ``mu_1 < mu_2 < ...``)."""
        return self.mu[j - 1]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["b"] + [f"mu{j + 1}" for j in range(self.J)])
            for i, b in enumerate(self.b_samples):
                w.writerow([repr(float(b))] + [repr(float(v)) for v in self.mu[:, i]])


def track_bands(spectra: Sequence[Spectrum], b_samples, k: int = 0, threshold: float = 0.7) -> BandFunctionTable:
    """Reorder sorted eigenvalues into branches by eigenvector overlap.

    Consecutive samples are matched by maximising ``|<v_i(b), v_j(b')>|``.
    If a matched pair overlaps less than ``threshold`` the step keeps sorted
    order and its b-value is flagged; this is never fatal.
    """
    b_samples = np.asarray(b_samples, float)
    J = min(len(s) for s in spectra)
    mu = np.empty((J, len(spectra)))
    errs = np.zeros_like(mu)
    flagged = []
    perm = np.arange(J)
    for i, s in enumerate(spectra):
        if i > 0:
            prev, cur = spectra[i - 1], s
            if prev.eigenvectors is None or cur.eigenvectors is None:
                step = np.arange(J)
                flagged.append(float(b_samples[i]))
            else:
                ov = np.abs(prev.eigenvectors[:, :J].conj().T @ cur.eigenvectors[:, :J])
                rows, cols = linear_sum_assignment(-ov)
                if ov[rows, cols].min() < threshold:
                    step = np.arange(J)
                    flagged.append(float(b_samples[i]))
                else:
                    step = cols
            # branch r was at index perm[r] in prev; it continues at step[perm[r]]
            perm = step[perm]
        mu[:, i] = s.eigenvalues[perm]
        if s.discretization_error is not None:
            errs[:, i] = s.discretization_error[perm]
    return BandFunctionTable(b_samples, mu, k, flagged, errs)


def write_spectrum_csv(spec: Spectrum, path):
    """Columns: index, eigenvalue, error_estimate, residual."""
    err = spec.discretization_error
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "error_estimate", "residual"])
        for i, lam in enumerate(spec.eigenvalues):
            e = "" if err is None else repr(float(err[i]))
            w.writerow([i + 1, repr(float(lam)), e, repr(float(spec.solver_residuals[i]))])
