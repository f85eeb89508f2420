import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from specgap import fields as F
from specgap.discretization import (
    Grid,
    assemble,
    assemble_montgomery_1d,
    boundary_mass,
    curl_deviation,
    dilation_check,
    landau_gauge,
    montgomery_extent,
    polynomial_function,
    read_triplets,
    write_triplets,
)
from specgap.eigensolve import lowest_eigenpairs
from specgap.errors import GridTooCoarse, TruncationTooSmall

# Hermite-basis (spectral, finite-difference free) eigenvalues of H(1, b), k = 1
HERMITE_ORACLE = {
    0.0: [0.66798626, 2.39364402, 4.69679539, 7.33573, 10.24430846],
    0.35: [0.5698286, 1.98447038, 4.1046712, 6.5691142, 9.32024792],
    1.0: [0.86958092, 1.661429, 3.54379462, 5.66539082, 8.12623194],
    -1.0: [2.14190184, 4.63948205, 7.50090573, 10.63362791, 13.9910259],
}


def test_landau_gauge_constant():
    ga = landau_gauge(F.constant(1.0))
    x, y = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    a1, a2 = ga(x, y)
    np.testing.assert_allclose(a1, 0.0, atol=1e-15)
    np.testing.assert_allclose(a2, x, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_landau_gauge_line_field(k):
    beta1 = 1.7
    ga = landau_gauge(F.polynomial_line(beta1=beta1, k=k))
    y = np.linspace(-1, 1, 9)
    a1, a2 = ga(0.4 + 0 * y, y)
    np.testing.assert_allclose(a1, -beta1 * y ** (k + 1) / math.factorial(k + 1), atol=1e-14)
    np.testing.assert_allclose(a2, 0.0, atol=1e-15)


def test_landau_gauge_sin2_closed_form():
    ga = landau_gauge(F.sin2_wells())
    rng = np.random.default_rng(1)
    x, y = rng.uniform(-2, 2, (2, 50))
    a1, a2 = ga(x, y)
    expect = x * np.sin(np.pi * y) ** 2 + x / 2 - np.sin(2 * np.pi * x) / (4 * np.pi)
    np.testing.assert_allclose(a2, expect, atol=1e-13)
    np.testing.assert_allclose(a1, 0.0, atol=1e-15)


@pytest.mark.parametrize("fs", [F.sin2_wells(), F.cos_product(), F.constant(2.0),
                                F.from_callable(lambda x, y: 1 + 0.3 * np.sin(2 * np.pi * x) * np.cos(np.pi * y), k=0)])
def test_curl_of_gauge_reproduces_field(fs):
    x, y = np.meshgrid(np.linspace(-0.7, 0.7, 7), np.linspace(-0.6, 0.6, 7))
    assert curl_deviation(fs, landau_gauge(fs), x.ravel(), y.ravel()) < 1e-5


def test_free_dirichlet_laplacian_1d():
    g = Grid.interval(0.0, 1.0, 128)
    op = assemble(None, None, g, 1.0, check_resolution=False)
    lam = lowest_eigenpairs(op, 1).eigenvalues[0]
    assert lam == pytest.approx(math.pi**2, rel=1e-3)


def test_lowest_landau_level_in_box():
    # box [-1.5, 1.5]^2 leaves 6.7 magnetic lengths sqrt(h) to each wall
    fs = F.constant(1.0)
    g = Grid.rectangle((-1.5, 1.5), (-1.5, 1.5), 192)
    op = assemble(fs, landau_gauge(fs), g, 0.05, check_resolution=False)
    lam = lowest_eigenpairs(op, 1).eigenvalues[0]
    assert abs(lam - 0.05) <= 1e-4


def _gauge_pair(fs, h, n=24):
    ga = landau_gauge(fs)
    phi = lambda x, y: x * x * y
    grad = lambda x, y: (2 * x * y, x * x)
    g = Grid.rectangle((-0.6, 0.6), (-0.5, 0.7), n)
    a = assemble(fs, ga, g, h, check_resolution=False)
    b = assemble(fs, ga.shifted(phi, grad), g, h, check_resolution=False)
    x, y = g.coords()
    W = sp.diags(np.exp(1j * phi(x, y) / h))
    return a, b, W


def test_gauge_shift_is_diagonal_unitary_conjugation():
    a, b, W = _gauge_pair(F.sin2_wells(), 0.07)
    dev = abs(b.matrix - W @ a.matrix @ W.conj()).max()
    assert dev <= 1e-12 * a.norm_bound()


def test_gauge_shift_spectrum_identical():
    a, b, _ = _gauge_pair(F.cos_product(), 0.05)
    la = np.linalg.eigvalsh(a.matrix.toarray())[:12]
    lb = np.linalg.eigvalsh(b.matrix.toarray())[:12]
    np.testing.assert_allclose(la, lb, atol=1e-12 * a.norm_bound())


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(4, 12), st.sampled_from(["sin2_wells", "cos_product", "constant"]))
def test_assembled_operators_hermitian_psd(h, n, name):
    fs = F.make_field(name)
    g = Grid.rectangle((-0.4, 0.5), (-0.3, 0.6), n)
    op = assemble(fs, landau_gauge(fs), g, h, check_resolution=False)
    assert op.hermitian_defect() == 0.0
    lam = np.linalg.eigvalsh(op.matrix.toarray())
    assert lam[0] >= -1e-12 * op.norm_bound()


def test_grid_too_coarse():
    fs = F.sin2_wells()
    with pytest.raises(GridTooCoarse):
        assemble(fs, landau_gauge(fs), Grid.rectangle((-1, 1), (-1, 1), 8), 1e-4)


def test_quartic_ground_state():
    # H(1, 0) = -d^2 + y^4/4; quartic scaling eig(-d^2 + c y^4) = c^{1/3} eig(-d^2 + y^4)
    from specgap.models import montgomery_eigenvalues

    lam = montgomery_eigenvalues(1.0, 0.0, 1, 1).eigenvalues[0]
    assert lam == pytest.approx(0.66799, abs=1e-5)
    assert lam == pytest.approx(0.25 ** (1 / 3) * 1.0603620904841829, abs=1e-7)


@pytest.mark.parametrize("b", sorted(HERMITE_ORACLE))
def test_montgomery_against_hermite_basis(b):
    from specgap.models import montgomery_eigenvalues

    lam = montgomery_eigenvalues(1.0, b, 1, 5).eigenvalues
    np.testing.assert_allclose(lam, HERMITE_ORACLE[b], rtol=2e-7)


def test_reflection_symmetry_exact():
    # k = 1: the potential is even in y, so y -> -y conjugation is exact
    g = Grid.interval(-6.0, 6.0, 400)
    P = np.eye(g.n_total)[::-1]
    m1 = assemble_montgomery_1d(1.0, 0.35, 1, g).matrix.toarray()
    assert np.array_equal(P @ m1 @ P, m1)
    e = np.linalg.eigvalsh(m1)[:5]
    assert np.array_equal(e, np.linalg.eigvalsh(P @ m1 @ P)[:5])
    # k = 2: reflection maps beta1 to -beta1
    m2 = assemble_montgomery_1d(1.0, 0.35, 2, g).matrix.toarray()
    m2r = assemble_montgomery_1d(1.0, 0.35, 2, g, beta1=-1.0).matrix.toarray()
    np.testing.assert_allclose(P @ m2 @ P, m2r, rtol=1e-13)


def test_truncation_too_small():
    with pytest.raises(TruncationTooSmall):
        assemble_montgomery_1d(1.0, 0.0, 1, Grid.interval(-1.0, 1.0, 200))
    g = Grid.interval(-montgomery_extent(1, 0.0), montgomery_extent(1, 0.0), 400)
    assert boundary_mass(assemble_montgomery_1d(1.0, 0.0, 1, g)) < 1e-8


def test_dilation_identity_example():
    g = Grid.interval(-3.0, 3.0, 300)
    op = assemble_montgomery_1d(0.1, 0.3, 1, g, check_truncation=False)
    assert dilation_check(1, 0.1, 0.3, 2.0, g) <= 1e-12 * op.norm_bound()
    assert dilation_check(1, 0.1, 0.3, 1.0, g) == 0.0


@given(st.sampled_from([1, 2]), st.floats(0.01, 1.0), st.floats(-2, 2), st.floats(0.3, 4.0))
@settings(max_examples=30, deadline=None)
def test_dilation_identity_property(k, h, beta, alpha):
    g = Grid.interval(-2.0, 2.0, 120)
    scale = assemble_montgomery_1d(h, beta, k, g, check_truncation=False).norm_bound()
    assert dilation_check(k, h, beta, alpha, g) <= 1e-12 * scale


def test_triplet_roundtrip(tmp_path):
    fs = F.sin2_wells()
    op = assemble(fs, landau_gauge(fs), Grid.rectangle((-0.5, 0.5), (-0.5, 0.5), 10), 0.1,
                  check_resolution=False)
    write_triplets(op, tmp_path / "m.txt")
    back = read_triplets(tmp_path / "m.txt", op.n)
    assert abs(back - op.matrix).max() == 0.0


def test_cylinder_grid_is_periodic_in_x():
    g = Grid.cylinder(1.0, 0.5, 8, 10)
    assert g.periodic_x
    x, _ = g.coords()
    assert len(np.unique(x)) == 8


def test_polynomial_function_gradient():
    phi, grad = polynomial_function({(2, 1): 1.0})
    gx, gy = grad(0.5, 2.0)
    assert phi(0.5, 2.0) == pytest.approx(0.5)
    assert (gx, gy) == pytest.approx((2.0, 0.25))
