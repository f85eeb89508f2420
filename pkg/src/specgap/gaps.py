"""Spectral-gap logic on computed spectra and quasimodes.

All checks here operate on discrete data: certified intervals from quasimode
residuals (self-adjoint resolvent bound), eigenvalue counts in low windows,
gap scanning at a stated resolution, gap-window prediction from the model
spectrum and a comparison of supercell and single-well spectra.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .discretization import DiscreteOperator
from .eigensolve import Spectrum, eigenpairs_near, lowest_eigenpairs
from .errors import GridMismatch, ResolutionTooFine, WindowNotExhausted
from .quasimodes import Quasimode


@dataclass
class Gap:
    lo: float
    hi: float
    interior: bool

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def core(self):
        """Middle third of the gap."""
        t = self.length / 3
        return (self.lo + t, self.hi - t)


@dataclass
class GapReport:
    window: tuple
    gaps: list
    h: Optional[float] = None
    delta: float = 0.0
    method: str = "scan"
    scaling_fit: Optional[float] = None

    @property
    def count(self):
        """Number of interior gaps (both ends at eigenvalues)."""
        return sum(g.interior for g in self.gaps)

    def to_dict(self):
        return {
            "window": list(self.window),
            "h": self.h,
            "delta": self.delta,
            "method": self.method,
            "count": self.count,
            "scaling_fit": self.scaling_fit,
            "gaps": [dict(lo=g.lo, hi=g.hi, length=g.length, interior=g.interior, core=list(g.core))
                     for g in self.gaps],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "lo", "hi", "length", "interior", "core_lo", "core_hi"])
            for g in self.gaps:
                c = g.core
                w.writerow([repr(self.h), repr(g.lo), repr(g.hi), repr(g.length), int(g.interior),
                            repr(c[0]), repr(c[1])])


@dataclass
class CertifiedInterval:
    lo: float
    hi: float
    mu: float
    residual: float
    nearest: Optional[float] = None

    @property
    def verified(self):
        if self.nearest is None:
            return None
        slack = 1e-12 * max(abs(self.mu), 1e-300)
        return bool(self.lo - slack <= self.nearest <= self.hi + slack)


def certify_eigenvalue(op: DiscreteOperator, q: Quasimode, verify: bool = True,
                       max_verify: int = 400_000) -> CertifiedInterval:
    """``[mu - r, mu + r]`` always meets the spectrum of a self-adjoint ``op``.

    With ``verify`` the eigenvalue of ``op`` nearest ``mu`` is computed
    (when ``op`` has at most ``max_verify`` rows) and recorded.
    """
    if len(q.vector) != op.n or not q.grid.same_nodes(op.grid):
        raise GridMismatch("quasimode and operator live on different grids")
    ci = CertifiedInterval(q.mu - q.residual, q.mu + q.residual, q.mu, q.residual)
    if verify and op.n <= max_verify:
        spec = eigenpairs_near(op, q.mu, 1, tol=1e-9, )
        ci.nearest = float(spec.eigenvalues[0])
    return ci


def eigenvalues_below(op: DiscreteOperator, threshold: float, m0: int = 16, m_max: int = 2000,
                      **solver) -> Spectrum:
    """Lowest eigenpairs until one exceeds ``threshold`` (doubling ``m``)."""
    m = m0
    while True:
        m = min(m, max(op.n // 4, 1))
        spec = lowest_eigenpairs(op, m, **solver)
        if spec.eigenvalues[-1] > threshold:
            return spec
        if m >= min(m_max, op.n // 4):
            raise WindowNotExhausted(f"{m} eigenvalues all lie below {threshold:g}")
        m *= 2


@dataclass
class WeylRow:
    h: float
    threshold: float
    count: int
    normalized: float


def weyl_count(spectra: Mapping[float, Spectrum], threshold_fn: Callable[[float], float], n: int = 2):
    """Rows ``(h, threshold, N_h, N_h h^n)`` with ``N_h = #{lambda <= threshold}``.

    Each spectrum must contain an eigenvalue above its threshold, otherwise
    the count is not certified and :class:`WindowNotExhausted` is raised.
    """
    rows = []
    for h in sorted(spectra, reverse=True):
        s = spectra[h]
        t = float(threshold_fn(h))
        ev = np.asarray(s.eigenvalues)
        if ev.size == 0 or ev[-1] <= t:
            raise WindowNotExhausted(f"spectrum at h = {h:g} does not reach past {t:g}")
        N = int(np.count_nonzero(ev <= t))
        rows.append(WeylRow(float(h), t, N, N * h**n))
    return rows


def weyl_variation(rows):
    """Max over min of the nonzero ``N_h h^n`` values (``inf`` if some count is 0)."""
    v = np.array([r.normalized for r in rows])
    if np.any(v == 0):
        return math.inf
    return float(v.max() / v.min())


def _values(spectrum):
    if isinstance(spectrum, Spectrum):
        return np.asarray(spectrum.eigenvalues, float), spectrum
    return np.sort(np.asarray(spectrum, float)), None


def default_delta(spectrum: Spectrum, window):
    """3 x the largest Richardson error estimate among eigenvalues in ``window``."""
    ev = np.asarray(spectrum.eigenvalues)
    err = spectrum.discretization_error
    if err is None:
        raise ValueError("spectrum carries no discretization error estimate")
    sel = (ev >= window[0]) & (ev <= window[1])
    return 3.0 * float(np.max(np.asarray(err)[sel])) if np.any(sel) else 0.0


def locate_gaps(spectrum, window, delta: Optional[float] = None, h: Optional[float] = None) -> GapReport:
    """Maximal eigenvalue-free sub-intervals of ``window`` longer than ``delta``.

    Gaps whose two ends are eigenvalues are interior; gaps touching a window
    edge are reported but not counted.  ``delta`` defaults to three times
    the largest Richardson error in the window and may not be smaller than
    that error.
    """
    lo, hi = map(float, window)
    ev, spec = _values(spectrum)
    if delta is None:
        delta = default_delta(spec, window) if spec is not None else 0.0
    if spec is not None:
        sel = (ev >= lo) & (ev <= hi)
        if spec.discretization_error is not None and np.any(sel):
            floor = float(np.max(np.asarray(spec.discretization_error)[sel]))
            if delta < floor:
                raise ResolutionTooFine(f"delta = {delta:.3g} below the discretization error {floor:.3g}")
        if np.any(sel) and delta < 2 * float(np.max(spec.solver_residuals[sel])):
            raise ResolutionTooFine("delta below twice the solver residual")
        h = spec.h if h is None else h
    inside = ev[(ev >= lo) & (ev <= hi)]
    pts = np.concatenate([[lo], inside, [hi]])
    gaps = []
    for i in range(len(pts) - 1):
        a, b = float(pts[i]), float(pts[i + 1])
        if b - a > delta:
            interior = 0 < i < len(pts) - 2
            gaps.append(Gap(a, b, interior))
    return GapReport((lo, hi), gaps, h, float(delta))


def predict_gap_windows(lambdas: Sequence[float], k: int, h: float, safety: float = 0.25):
    """Windows ``[(l_m + s g) h^e, (l_{m+1} - s g) h^e]``, ``g = l_{m+1} - l_m``, ``e = (2k+2)/(k+2)``."""
    lam = np.asarray(lambdas, float)
    if np.any(np.diff(lam) <= 0):
        raise ValueError("lambdas must be strictly increasing")
    if not 0 <= safety <= 0.5:
        raise ValueError("safety must lie in [0, 1/2]")
    e = h ** ((2 * k + 2) / (k + 2))
    out = []
    for a, b in zip(lam[:-1], lam[1:]):
        g = b - a
        out.append(((a + safety * g) * e, (b - safety * g) * e))
    return out


def eigenvalues_in(windows, values):
    """Eigenvalues falling inside any of the closed ``windows``."""
    v = np.asarray(values, float)
    hit = np.zeros(v.shape, bool)
    for a, b in windows:
        if a < b:
            hit |= (v >= a) & (v <= b)
    return v[hit]


def hausdorff(a, b):
    """Two-sided Hausdorff distance of finite point sets (``inf`` if exactly one is empty)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return math.inf
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass
class LocalizationRow:
    h: float
    window: tuple
    distance: float
    floor: float
    n_full: int
    n_well: int

    @property
    def floor_limited(self):
        return self.distance <= self.floor


@dataclass
class LocalizationReport:
    rows: list
    r2_exp: float
    r2_power: float
    exp_fit: tuple
    power_fit: tuple
    monotone: bool

    @property
    def preferred(self):
        return "superpolynomial" if self.r2_exp >= self.r2_power else "power"

    @property
    def floor_limited(self):
        return any(r.floor_limited for r in self.rows)

    def to_dict(self):
        return {
            "rows": [asdict(r) for r in self.rows],
            "r2_exp": self.r2_exp,
            "r2_power": self.r2_power,
            "exp_fit": list(self.exp_fit),
            "power_fit": list(self.power_fit),
            "monotone": self.monotone,
            "preferred": self.preferred,
        }


def _fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return tuple(map(float, coef)), r2


def spectral_distance(full: Spectrum, well: Spectrum, window, copies: int = 1):
    """Hausdorff distance of the two spectra restricted to ``window``.

    The well spectrum is replicated ``copies`` times (as a multiset); the
    distance itself is a set distance.  Returns ``(distance, n_full, n_well)``.
    """
    lo, hi = window
    a = np.asarray(full.eigenvalues)
    b = np.repeat(np.asarray(well.eigenvalues), copies)
    a = a[(a >= lo) & (a <= hi)]
    b = b[(b >= lo) & (b <= hi)]
    return hausdorff(a, b), int(a.size), int(b.size)


def localization_check(full_specs: Mapping[float, Spectrum], well_specs: Mapping[float, Spectrum],
                       window_fn: Callable[[float], tuple], copies: int = 1,
                       floors: Optional[Mapping[float, float]] = None) -> LocalizationReport:
    """Distance between supercell and single-well spectra over an h-sweep.

    Fits ``log d = a - c / sqrt(h)`` and ``log d = a + p log h`` and reports
    their R^2.  ``floors`` holds per-h discretization error floors; rows at or
    below the floor are flagged as floor-limited.
    """
    rows = []
    for h in sorted(full_specs, reverse=True):
        w = window_fn(h)
        d, nf, nw = spectral_distance(full_specs[h], well_specs[h], w, copies)
        fl = float(floors[h]) if floors and h in floors else 0.0
        rows.append(LocalizationRow(float(h), tuple(map(float, w)), d, fl, nf, nw))
    hs = np.array([r.h for r in rows])
    ds = np.array([r.distance for r in rows])
    ok = np.isfinite(ds) & (ds > 0)
    if np.count_nonzero(ok) >= 3:
        ef, r2e = _fit(1 / np.sqrt(hs[ok]), np.log(ds[ok]))
        pf, r2p = _fit(np.log(hs[ok]), np.log(ds[ok]))
    else:
        ef, r2e, pf, r2p = (math.nan, math.nan), math.nan, (math.nan, math.nan), math.nan
    # rows are ordered by decreasing h, i.e. increasing 1/h
    monotone = bool(np.all(np.diff(ds) < 0))
    return LocalizationReport(rows, r2e, r2p, ef, pf, monotone)


def count_gaps_from_quasimodes(quasimodes, window) -> int:
    """Gap lower bound from certified intervals.

    Keeps intervals ``[mu - r, mu + r]`` whose centre is farther than ``r``
    from both window edges, then takes the largest chain of intervals that
    pairwise satisfy ``mu' - mu > r + r'``; the result is the chain length
    minus one (0 if fewer than two qualify).
    """
    lo, hi = window
    items = []
    for q in quasimodes:
        mu, r = (q.mu, q.residual) if isinstance(q, Quasimode) else (float(q[0]), float(q[1]))
        if not np.isfinite(r):
            continue
        if mu - lo > r and hi - mu > r:
            items.append((mu + r, mu - r))
    # interval scheduling by right end maximises the number of disjoint intervals
    items.sort()
    end = -math.inf
    n = 0
    for right, left in items:
        if left > end:
            n += 1
            end = right
    return max(n - 1, 0)


def supercell_grid(fs, h: float, N: int = 3, per_unit: int = 16, center=(0.0, 0.0)):
    """Square block of ``N x N`` unit cells centred on a well, Dirichlet outside.

    Spacing ``h^{1/(k+2)} / per_unit`` rounded so that cell edges are grid lines.
    """
    from .discretization import Grid

    a = math.sqrt(abs(np.linalg.det(np.asarray(fs.lattice, float)))) if fs.lattice else 1.0
    d = h ** (1.0 / (fs.k + 2)) / per_unit
    per_cell = int(math.ceil(a / d))
    n = N * per_cell
    R = 0.5 * N * a
    return Grid.rectangle((center[0] - R, center[0] + R), (center[1] - R, center[1] + R), n)


def well_grid(fs, grid, level: float, center=(0.0, 0.0)):
    """Restrict ``grid`` to the component of ``{|b| < level}`` containing ``center``."""
    from scipy import ndimage

    from .fields import trplus

    x, y = grid.full_coords()
    inside = (trplus(fs, x, y) < level).reshape(grid.shape)
    lab, _ = ndimage.label(inside)
    ax0, ax1 = grid.axis(0), grid.axis(1)
    i = int(np.argmin(np.abs(ax0 - center[0])))
    j = int(np.argmin(np.abs(ax1 - center[1])))
    if lab[i, j] == 0:
        raise ValueError("center is not inside the sublevel set")
    return grid.with_mask(lab == lab[i, j])
