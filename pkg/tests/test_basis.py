import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlshift.basis import SplineSpec, build_k1, build_k2, d_dx_k2, eval_bspline, place_knots
from nlshift.dataset import PanelDataset
from nlshift.errors import DegenerateKnots


def cox_de_boor(breaks, degree, i, k, t):
    """Naive recursive B-spline evaluator (independent oracle)."""
    tv = np.concatenate([np.full(degree, breaks[0]), breaks, np.full(degree, breaks[-1])])
    if k == 0:
        if tv[i] <= t < tv[i + 1]:
            return 1.0
        # right-closed at the last interval
        if t == tv[-1] and tv[i] < tv[i + 1] and tv[i + 1] == tv[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if tv[i + k] != tv[i]:
        left = (t - tv[i]) / (tv[i + k] - tv[i]) * cox_de_boor(breaks, degree, i, k - 1, t)
    right = 0.0
    if tv[i + k + 1] != tv[i + 1]:
        right = (tv[i + k + 1] - t) / (tv[i + k + 1] - tv[i + 1]) * cox_de_boor(breaks, degree, i + 1, k - 1, t)
    return left + right


def test_linear_hats_at_midpoint():
    row = eval_bspline(SplineSpec(degree=1, n_knots=0), np.array([0.0, 1.0]), 0.5)
    assert np.allclose(row, [0.5, 0.5])


def test_degree2_matches_recursive_oracle():
    breaks = np.array([0.0, 0.5, 1.0])
    spec = SplineSpec(degree=2, n_knots=1)
    for t in (0.25, 0.1, 0.5, 0.75, 0.99):
        row = eval_bspline(spec, breaks, t)
        oracle = [cox_de_boor(breaks, 2, i, 2, t) for i in range(4)]
        assert np.allclose(row, oracle, atol=1e-12), (t, row, oracle)


@settings(max_examples=60, deadline=None)
@given(
    degree=st.integers(1, 3),
    n_knots=st.integers(0, 5),
    u=st.floats(0.0, 1.0),
    seed=st.integers(0, 10_000),
)
def test_partition_of_unity(degree, n_knots, u, seed):
    rng = np.random.default_rng(seed)
    sample = rng.standard_normal(200)
    placed = place_knots(SplineSpec(degree=degree, n_knots=n_knots), sample)
    t = placed.lo + u * (placed.hi - placed.lo)
    row = placed.design(np.array([t]))[0]
    assert abs(row.sum() - 1.0) <= 1e-12


def test_partition_of_unity_vs_oracle_random_points():
    rng = np.random.default_rng(4)
    sample = rng.uniform(-2, 3, 400)
    spec = SplineSpec(degree=3, n_knots=4)
    placed = place_knots(spec, sample)
    pts = rng.uniform(placed.lo, placed.hi, 25)
    design = placed.design(pts)
    for row, t in zip(design, pts):
        oracle = [cox_de_boor(np.asarray(placed.breaks), 3, i, 3, t) for i in range(placed.dim)]
        assert np.allclose(row, oracle, atol=1e-10)


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(9)
    sample = rng.standard_normal(500)
    for degree in (1, 2, 3):
        placed = place_knots(SplineSpec(degree=degree, n_knots=3), sample)
        span = placed.hi - placed.lo
        t = rng.uniform(placed.lo + 0.02 * span, placed.hi - 0.02 * span, 100)
        h = 1e-5
        fd = (placed.design(t + h) - placed.design(t - h)) / (2 * h)
        an = placed.design(t, deriv=1)
        assert np.all(np.abs(an - fd) <= 1e-6 * (1.0 + np.abs(an)))


def test_one_sided_derivatives_agree_at_knot():
    placed = place_knots(SplineSpec(degree=2, n_knots=2), np.linspace(0, 1, 50))
    for knot in placed.breaks[1:-1]:
        h = 1e-9
        left = placed.design(np.array([knot - h]), deriv=1)[0]
        right = placed.design(np.array([knot + h]), deriv=1)[0]
        assert np.allclose(left, right, atol=1e-6)


def test_degenerate_knots_raises():
    with pytest.raises(DegenerateKnots):
        place_knots(SplineSpec(degree=3, n_knots=2), np.ones(50))
    # heavy ties put repeated quantile knots
    sample = np.concatenate([np.zeros(90), np.ones(10)])
    with pytest.raises(DegenerateKnots):
        place_knots(SplineSpec(degree=3, n_knots=4), sample)


def test_build_k1_linear_dims(small_panel):
    basis = build_k1(small_panel)
    assert basis.columns.shape == (small_panel.n, 1 + 2 + 0)
    assert basis.flagged_redundant == ()


def test_build_k1_minimal_two_columns():
    rng = np.random.default_rng(2)
    panel = PanelDataset(y=rng.standard_normal(20), x=rng.standard_normal(20), w=rng.uniform(0, 1, (20, 1)), d=np.empty((20, 0)))
    basis = build_k1(panel)
    assert basis.columns.shape[1] == 2


def test_build_k1_flags_duplicate_share():
    rng = np.random.default_rng(2)
    w = rng.uniform(0, 1, (30, 1))
    panel = PanelDataset(y=rng.standard_normal(30), x=rng.standard_normal(30), w=np.hstack([w, w]), d=np.empty((30, 0)))
    basis = build_k1(panel)
    assert len(basis.flagged_redundant) == 1
    assert basis.columns.shape[1] == 3  # flagged, not dropped


def test_build_k2_dimensions():
    rng = np.random.default_rng(8)
    n = 300
    x = rng.standard_normal(n)
    v = rng.uniform(0.01, 0.99, n)
    d = rng.standard_normal((n, 15))
    spec = SplineSpec(degree=3, n_knots=4)
    basis = build_k2(x, d, v, spec, spec)
    assert basis.columns.shape == (n, 8 * 8 + 15)
    lin = SplineSpec(degree=1, n_knots=0)
    basis2 = build_k2(x, np.empty((n, 0)), v, lin, lin)
    assert basis2.columns.shape == (n, 4)


def test_k2_tensor_equals_explicit_kronecker():
    rng = np.random.default_rng(5)
    n = 50
    x = rng.standard_normal(n)
    v = rng.uniform(0, 1, n)
    spec = SplineSpec(degree=2, n_knots=2)
    basis = build_k2(x, np.empty((n, 0)), v, spec, spec)
    qx = basis.structure.x_spline.design(x)
    qv = basis.structure.v_spline.design(v)
    for i in range(0, n, 7):
        assert np.allclose(basis.columns[i], np.kron(qx[i], qv[i]), atol=1e-14)


def test_d_dx_k2_covariate_block_zero_and_linear_slope():
    rng = np.random.default_rng(6)
    n = 80
    x = rng.standard_normal(n)
    v = rng.uniform(0, 1, n)
    d = rng.standard_normal((n, 3))
    lin = SplineSpec(degree=1, n_knots=0)
    basis = build_k2(x, d, v, lin, lin)
    deriv = d_dx_k2(basis, x, d, v)
    assert np.all(deriv[:, -3:] == 0.0)
    # the four tensor columns are (1-sx)(1-sv), (1-sx)sv, sx(1-sv), sx sv in
    # normalized coordinates; their x-derivatives sum to zero and recombine
    # to the chain-rule slope of x
    qv = basis.structure.v_spline.design(v)
    span = basis.structure.x_spline.hi - basis.structure.x_spline.lo
    expect = np.hstack([-qv / span, qv / span])
    assert np.allclose(deriv[:, :4], expect, atol=1e-12)


def test_d_dx_matches_finite_difference_through_basis():
    rng = np.random.default_rng(7)
    n = 100
    x = rng.standard_normal(n)
    v = rng.uniform(0, 1, n)
    spec = SplineSpec(degree=3, n_knots=4)
    basis = build_k2(x, np.empty((n, 0)), v, spec, spec)
    lo, hi = basis.structure.x_spline.lo, basis.structure.x_spline.hi
    pts = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo), 100)
    vv = rng.uniform(0.1, 0.9, 100)
    h = 1e-5
    up = basis.structure.rows(pts + h, np.empty((100, 0)), vv)
    dn = basis.structure.rows(pts - h, np.empty((100, 0)), vv)
    fd = (up - dn) / (2 * h)
    an = basis.structure.rows_dx(pts, np.empty((100, 0)), vv)
    assert np.all(np.abs(an - fd) <= 1e-6 * (1.0 + np.abs(an)))


def test_extrapolation_is_linear_continuation():
    placed = place_knots(SplineSpec(degree=3, n_knots=2), np.linspace(-1, 1, 64))
    inside = placed.design(np.array([placed.hi]))
    slope = placed.design(np.array([placed.hi]), deriv=1)
    out = placed.design(np.array([placed.hi + 0.7]))
    assert np.allclose(out, inside + 0.7 * slope, atol=1e-12)
    # derivative stays at the boundary value outside
    dout = placed.design(np.array([placed.hi + 0.7]), deriv=1)
    assert np.allclose(dout, slope, atol=1e-12)


def test_build_k1_production_scale_dimensions():
    rng = np.random.default_rng(30)
    n, j, p = 60, 397, 15
    panel = PanelDataset(
        y=rng.standard_normal(n), x=rng.standard_normal(n),
        w=rng.uniform(0, 1, (n, j)), d=rng.standard_normal((n, p)),
    )
    basis = build_k1(panel)
    assert basis.columns.shape == (n, 1 + 397 + 15)


def test_build_k2_flags_empty_corner_columns():
    rng = np.random.default_rng(31)
    n = 400
    x = rng.uniform(0, 1, n)
    v = x  # perfectly dependent: opposite corners are empty
    spec = SplineSpec(degree=3, n_knots=4)
    basis = build_k2(x, np.empty((n, 0)), v, spec, spec)
    assert len(basis.flagged_redundant) > 0
