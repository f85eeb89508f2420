import math

import numpy as np
import pytest
import scipy.sparse as sp

from specgap import fields as F
from specgap.discretization import Grid, assemble_montgomery_1d, schrodinger_1d
from specgap.eigensolve import lowest_eigenpairs
from specgap.errors import NoAdmissibleInteger
from specgap.models import (
    MontgomeryParams,
    cylinder_fiber,
    cylinder_grid,
    cylinder_operator,
    model_grid,
    model_operator_2d,
    montgomery_bands,
    montgomery_eigenvalues,
    reference_spectrum,
    select_p,
)

# sin^2 model pi^2 (x^2 + y^2), Richardson at two resolutions (agree to ~1e-6)
K1_SIN2 = [4.0988176, 6.9823649, 9.2219616, 11.0850742, 12.4991832]


def test_params_validation():
    with pytest.raises(ValueError):
        MontgomeryParams(k=0)
    with pytest.raises(ValueError):
        MontgomeryParams(h=-1.0)


def test_band_at_zero():
    t = montgomery_bands(1, [0.0], 1)
    assert t.mu[0, 0] == pytest.approx(0.66799, abs=1e-5)


def test_first_band_has_unique_interior_minimum():
    b = np.round(np.arange(-1.0, 3.0 + 1e-9, 0.05), 10)
    mu1 = montgomery_bands(1, b, 1, richardson=False).band(1)
    i = int(np.argmin(mu1))
    assert 0 < i < len(b) - 1
    d = np.diff(mu1)
    assert np.all(d[:i] < 0) and np.all(d[i:] > 0)
    # Hermite-basis oracle: mu1(0.35) = 0.5698286
    assert b[i] == pytest.approx(0.35, abs=0.051)


def test_select_p_examples():
    params = MontgomeryParams(k=1, L=2 * math.pi)
    p, b = select_p(0.01, params, 0.0, 1.0)
    assert p == 1
    assert b == pytest.approx(0.01 ** (1 / 3), rel=1e-12)
    with pytest.raises(NoAdmissibleInteger) as exc:
        select_p(0.3, params, 0.4, 0.41)
    assert exc.value.h_max == pytest.approx(0.01**3, rel=1e-12)
    p, b = select_p(0.01, MontgomeryParams(k=1, alpha1=1.0), 0.0, 1.0)
    assert 0.0 < b < 1.0
    # smallest admissible p: one step down leaves the window
    e = 0.01 ** (-2 / 3)
    assert e * (0.01 * (p - 1) - 1.0) <= 0.0


def test_select_p_window_postcondition():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h = 10 ** rng.uniform(-4, -1)
        params = MontgomeryParams(k=int(rng.integers(1, 3)), alpha1=rng.uniform(-2, 2), L=rng.uniform(0.5, 7),
                                  beta1=rng.uniform(0.5, 3))
        b1 = rng.uniform(-1, 2)
        b2 = b1 + rng.uniform(0.05, 2)
        try:
            p, b = select_p(h, params, b1, b2)
        except NoAdmissibleInteger:
            continue
        assert b1 < b < b2


def _cyl(h, nx, ny, Y=1.5, p=1):
    params = MontgomeryParams(k=1, h=h, L=2 * math.pi)
    g = Grid.cylinder(params.L, Y, nx, ny)
    return params, g


def test_fiber_is_exact_momentum_block():
    params, g = _cyl(0.05, 64, 120)
    op = cylinder_operator(params, g)
    x, _ = g.coords()
    xs = g.axis(0)
    ny = g.intervals[1] - 1
    for p in (0, 1, 3):
        e = np.exp(-2j * math.pi * p * xs / params.L) / math.sqrt(len(xs))
        U = sp.kron(sp.csr_matrix(e[:, None]), sp.identity(ny), format="csr")
        block = (U.conj().T @ op.matrix @ U).toarray()
        fib = cylinder_fiber(params, p, g).matrix.toarray()
        assert np.abs(block - fib).max() <= 1e-12 * op.norm_bound()


def test_separated_mode_residual_is_second_order():
    h, Y, p = 0.05, 1.5, 1
    res = []
    for nx, ny in ((128, 120), (256, 120), (512, 120)):
        params, g = _cyl(h, nx, ny, Y)
        beta = 2 * math.pi * h * p / params.L
        s = lowest_eigenpairs(assemble_montgomery_1d(h, beta, 1, Grid.interval(-Y, Y, ny), check_truncation=False), 1)
        v = s.eigenvectors[:, 0]
        x, _ = g.coords()
        u = np.exp(-2j * math.pi * p * x / params.L) * np.tile(v, nx)
        op = cylinder_operator(params, g)
        res.append(np.linalg.norm(op.matrix @ u - s.eigenvalues[0] * u) / np.linalg.norm(u))
    slopes = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(slopes - 2.0) <= 0.1)


def test_lowest_cylinder_eigenvalue_matches_band_minimum():
    h = 0.05
    params = MontgomeryParams(k=1, h=h, L=2 * math.pi)
    g = cylinder_grid(params, 1.5, per_unit=32)
    lam = lowest_eigenpairs(cylinder_operator(params, g), 1).eigenvalues[0]
    # fiber minimisation over the discrete momenta p, b = h^{1/3} p
    bs = h ** (1 / 3) * np.arange(-2, 6)
    oracle = min(montgomery_eigenvalues(1.0, b, 1, 1).eigenvalues[0] for b in bs)
    assert lam == pytest.approx(h ** (4 / 3) * oracle, rel=0.02)


def test_model_operator_scaling_exact_under_dilated_grid():
    fs = F.model_field(F.sin2_wells())
    lams = []
    hs = [2.0**-4, 2.0**-5, 2.0**-6]
    for h in hs:
        lams.append(lowest_eigenpairs(model_operator_2d(fs, h, model_grid(fs, h, 2.5, 8)), 1).eigenvalues[0])
    slope = np.polyfit(np.log(hs), np.log(lams), 1)[0]
    assert slope == pytest.approx(1.5, abs=1e-9)


def test_constant_model_control_slope_one():
    fs = F.polynomial({(0, 0): 1.0})
    hs = [2.0**-4, 2.0**-6]
    lams = [lowest_eigenpairs(model_operator_2d(fs, h, model_grid(fs, h, 4.0, 8)), 1).eigenvalues[0] for h in hs]
    slope = math.log(lams[0] / lams[1]) / math.log(hs[0] / hs[1])
    assert slope == pytest.approx(1.0, abs=1e-9)
    assert lams[1] == pytest.approx(hs[1], rel=0.02)


def test_model_operator_requires_polynomial():
    with pytest.raises(ValueError):
        model_operator_2d(F.sin2_wells(), 0.1, model_grid(F.sin2_wells(), 0.1))


def test_reference_spectrum_and_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECGAP_CACHE", str(tmp_path))
    fs = F.model_field(F.sin2_wells())
    lam, err = reference_spectrum(fs, m=5, per_unit=16)
    assert (tmp_path / "model_reference.json").exists()
    np.testing.assert_allclose(lam, K1_SIN2, atol=5e-5)
    assert np.all(err < 0.02)
    lam2, _ = reference_spectrum(fs, m=5, per_unit=16)
    np.testing.assert_array_equal(lam, lam2)


@pytest.mark.slow
def test_model_spectrum_stable_under_box_doubling():
    fs = F.model_field(F.sin2_wells())
    small, es = reference_spectrum(fs, m=10, halfwidth=2.5, per_unit=16, use_cache=False)
    big, eb = reference_spectrum(fs, m=10, halfwidth=5.0, per_unit=16, use_cache=False)
    assert np.all(np.abs(small - big) <= 3 * np.maximum(es, eb) + 1e-6)
