import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgap import fields as F
from specgap.errors import DomainNotFundamental, NoWells

coord = st.floats(-3, 3, allow_nan=False)


def test_trplus_examples():
    assert F.trplus(F.constant(2.0), (0.3, -1.7)) == 2.0
    b = F.from_callable(lambda x, y: np.sin(2 * np.pi * x), k=1)
    assert F.trplus(b, 0.25, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert F.trplus(F.sin2_wells(), 0.5, 0.5) == pytest.approx(2.0, abs=1e-15)


@given(coord, coord, st.floats(0.1, 5))
def test_trplus_homogeneous_and_nonnegative(x, y, a):
    fs = F.cos_product()
    fa = F.cos_product(amplitude=a)
    assert F.trplus(fa, x, y) == pytest.approx(a * F.trplus(fs, x, y), rel=1e-12, abs=1e-15)
    assert F.trplus(fs, x, y) >= 0


@given(coord, coord, st.integers(-3, 3), st.integers(-3, 3))
def test_fields_are_lattice_periodic(x, y, i, j):
    for fs in (F.sin2_wells(), F.cos_product()):
        (a, b), (c, d) = fs.lattice
        gx, gy = i * a + j * c, i * b + j * d
        assert fs(x + gx, y + gy) == pytest.approx(fs(x, y), abs=1e-11)


def test_check_periodic_shipped_fields():
    for fs in (F.sin2_wells(), F.cos_product(), F.constant(1.0)):
        assert F.check_periodic(fs) < 1e-12


def test_barrier_sin2():
    cell = F.Cell.rectangle((-0.5, 0.5), (-0.5, 0.5))
    rep = F.check_barrier(F.sin2_wells(), cell, 0.9)
    assert rep.passed
    # boundary minimum 1 at the edge midpoints (dense-sampling oracle)
    assert rep.boundary_min == pytest.approx(1.0, abs=1e-5)
    assert rep.b0 == pytest.approx(0.0, abs=1e-4)


def test_barrier_cos_product_on_fundamental_cell():
    # the lattice of 1 - cos cos is spanned by (1/2, +-1/2); its cell is a diamond
    cell = F.Cell.centered((0.5, 0.5), (0.5, -0.5))
    rep = F.check_barrier(F.cos_product(), cell, 0.5)
    assert rep.passed
    assert rep.boundary_min == pytest.approx(1.0, abs=1e-4)


def test_barrier_rejects_non_fundamental_square():
    with pytest.raises(DomainNotFundamental):
        F.check_barrier(F.cos_product(), F.Cell.rectangle((-0.5, 0.5), (-0.5, 0.5)), 0.5)


def test_barrier_constant_field_fails():
    rep = F.check_barrier(F.constant(1.0), F.Cell.rectangle((0, 1), (0, 1)), 0.1)
    assert not rep.passed
    assert rep.margin == pytest.approx(-0.1, abs=1e-12)


def test_locate_wells_sin2():
    cat = F.locate_wells(F.sin2_wells(), F.Cell.rectangle((-0.5, 0.5), (-0.5, 0.5)), 0.5)
    assert len(cat.wells) == 1
    w = cat.wells[0]
    assert np.hypot(*w.center) < 5e-3
    assert w.k == pytest.approx(2.0, abs=0.05)
    assert w.shape == "point"


def test_locate_wells_sinusoid_lines():
    fs = F.sinusoid(axis="x")
    cat = F.locate_wells(fs, F.Cell.rectangle((-0.25, 0.75), (0.0, 1.0)), 0.5)
    xs = sorted(w.center[0] for w in cat.wells)
    assert len(xs) == 2
    assert xs[0] == pytest.approx(0.0, abs=5e-3)
    assert xs[1] == pytest.approx(0.5, abs=5e-3)
    assert all(w.shape == "curve" for w in cat.wells)
    assert all(abs(w.k - 1) < 0.05 for w in cat.wells)
    assert all(w.beta1 == pytest.approx(2 * math.pi, rel=0.02) for w in cat.wells)


def test_locate_wells_constant_raises():
    with pytest.raises(NoWells):
        F.locate_wells(F.constant(1.0), F.Cell.rectangle((0, 1), (0, 1)), 0.1)


@pytest.mark.parametrize("fs", [F.sin2_wells(), F.cos_product(), F.polynomial({(2, 0): 1.0, (0, 2): 2.0})])
def test_fitted_order_matches_declared(fs):
    center = fs.wells[0]
    k, _ = F.fit_order(fs, center, 0.0, 1.0)
    assert abs(k - fs.k) < 0.1


def test_model_field_is_taylor_polynomial():
    m = F.model_field(F.sin2_wells())
    assert m.k == 2
    x, y = 0.3, -0.2
    assert m(x, y) == pytest.approx(math.pi**2 * (x * x + y * y), rel=1e-14)


def test_polynomial_rejects_inhomogeneous():
    with pytest.raises(ValueError):
        F.polynomial({(2, 0): 1.0, (1, 0): 1.0})


def test_make_field_unknown():
    with pytest.raises(ValueError):
        F.make_field("nope")
