"""Tests for the first-order gravity residuals and the gauge-field residual.

Oracles: the Einstein tensor comes from an independent Christoffel pipeline
on the induced metric (riemann.py), while the stationarity forms are built
from curvature 2-forms of the connection; agreement between the two routes
is the content being tested, not a shared computation.  The round-sphere
action value is checked against analytic antiderivatives.
"""

import math

import numpy as np
import pytest

import solderlab.bundle as bd
import solderlab.expr as ex
import solderlab.fixtures as fx
import solderlab.forms as fm
import solderlab.palatini as pl
import solderlab.puzzle as pz
import solderlab.riemann as rm
from solderlab.bundle import BundleValuedForm, ConnectionForms
from solderlab.forms import Chart, DifferentialForm
from solderlab.puzzle import Puzzle

from helpers import identity_metric


def _euclid(chart, n):
    return bd.FiberMetric(
        chart, n,
        tuple(tuple(ex.constant(1.0 if i == j else 0.0) for j in range(n)) for i in range(n)),
    )


def flat_four() -> Puzzle:
    chart = Chart(("x0", "x1", "x2", "x3"), ((-1.0, 1.0),) * 4)
    phi = BundleValuedForm(
        chart, 4, 1, tuple(fm.coordinate_differential(chart, a) for a in range(4))
    )
    zero = fm.zero_form(chart, 1)
    omega = ConnectionForms(chart, 4, tuple(tuple(zero for _ in range(4)) for _ in range(4)))
    return Puzzle(chart, 4, omega, phi, fiber_metric=_euclid(chart, 4))


def warped_four() -> Puzzle:
    """Diagonal coframe with non-constant warp factors; not an Einstein
    metric, so the scalar-curvature identity is exercised off the vacuum."""
    chart = Chart(("x0", "x1", "x2", "x3"), ((-0.4, 0.4),) * 4)
    v = [ex.variable(nm) for nm in chart.names]
    warps = [
        ex.constant(1.0),
        ex.add(ex.constant(1.0), ex.mul(ex.constant(0.2), ex.sin(v[0]))),
        ex.add(ex.constant(1.0), ex.mul(ex.constant(0.1), ex.mul(v[0], v[0]))),
        ex.add(ex.constant(1.0), ex.mul(ex.constant(0.05), v[2])),
    ]
    phi = BundleValuedForm(
        chart, 4, 1,
        tuple(DifferentialForm(chart, 1, {(a,): warps[a]}) for a in range(4)),
    )
    omega = pz.torsion_free_connection(phi, _euclid(chart, 4))
    return Puzzle(chart, 4, omega, phi, fiber_metric=_euclid(chart, 4))


def test_flat_chart_everything_vanishes():
    puzzle = flat_four()
    res = pl.palatini_residual(puzzle)
    assert res.max_abs == 0.0
    assert all(f.is_zero for f in res.forms)
    assert pl.einstein_residual(puzzle, samples=10).max_abs < 1e-14
    assert pl.stationarity_identity_residual(puzzle, samples=5) < 1e-14
    assert abs(pl.palatini_action(puzzle, nodes=4)) < 1e-14


def test_vacuum_coframe_stationary():
    puzzle = fx.schwarzschild()
    res = pl.palatini_residual(puzzle, samples=12, seed=1)
    assert res.max_abs < 1e-9
    ein = pl.einstein_residual(puzzle, samples=12, seed=1)
    assert ein.values.shape == (12, 4, 4)
    assert ein.max_abs < 1e-9
    assert pl.stationarity_identity_residual(puzzle, samples=12, seed=1) < 1e-9
    result = pl.converge_action(puzzle)
    assert abs(result.value) < 1e-8


def test_round_sphere_curvature_and_action():
    puzzle = fx.round_sphere4()
    chart = puzzle.chart

    g = pz.induced_metric(puzzle)
    R = rm.scalar_curvature(g, chart)
    ein = pl.einstein_residual(puzzle, samples=12, seed=2)
    for p, G_at_p in zip(ein.points, ein.values):
        assert abs(ex.evaluate(R, p) - 12.0) < 1e-9
        g_at_p = np.array([[ex.evaluate(g[i][j], p) for j in range(4)] for i in range(4)])
        assert np.max(np.abs(G_at_p + 3.0 * g_at_p)) < 1e-9

    G_frame = pl.einstein_tensor_frame(puzzle)
    for p in fm.sample_points(chart, 6, seed=2):
        for l in range(4):
            for d in range(4):
                want = -3.0 if l == d else 0.0
                assert abs(ex.evaluate(G_frame[l][d], p) - want) < 1e-9

    dens = pl.action_density(puzzle)
    coeff = dens.coefficient((0, 1, 2, 3))
    det_phi = ex.parse_expr("sin(a)^3 * sin(b)^2 * sin(c)", chart.names)
    for p in fm.sample_points(chart, 12, seed=2):
        assert abs(ex.evaluate(coeff, p) - 24.0 * ex.evaluate(det_phi, p)) < 1e-9

    assert pl.stationarity_identity_residual(puzzle, samples=12, seed=2) < 1e-9

    # closed-form integral of 24 sin^3(a) sin^2(b) sin(c) over the box
    def int_sin3(lo, hi):
        F = lambda x: math.cos(x) ** 3 / 3.0 - math.cos(x)
        return F(hi) - F(lo)

    def int_sin2(lo, hi):
        F = lambda x: 0.5 * (x - math.sin(x) * math.cos(x))
        return F(hi) - F(lo)

    def int_sin(lo, hi):
        return math.cos(lo) - math.cos(hi)

    exact = 24.0 * int_sin3(0.6, 2.4) * int_sin2(0.6, 2.4) * int_sin(0.6, 2.4) * 1.0
    result = pl.converge_action(puzzle)
    assert result.error_estimate <= 1e-8 * (1.0 + abs(result.value))
    assert abs(result.value - exact) < 1e-8 * (1.0 + abs(exact))


def test_action_scales_quadratically_in_the_coframe():
    puzzle = fx.round_sphere4()
    c = 1.7
    scaled_phi = BundleValuedForm(
        puzzle.chart, 4, 1,
        tuple(fm.form_scale(c, puzzle.phi.component(i)) for i in range(4)),
    )
    scaled = Puzzle(
        puzzle.chart, 4, puzzle.omega, scaled_phi, fiber_metric=puzzle.fiber_metric
    )
    base = pl.palatini_action(puzzle, nodes=10)
    assert abs(pl.palatini_action(scaled, nodes=10) - c * c * base) < 1e-9 * (1 + abs(base))


def test_action_density_is_twice_scalar_curvature_times_volume():
    puzzle = warped_four()
    chart = puzzle.chart
    g = pz.induced_metric(puzzle)
    R = rm.scalar_curvature(g, chart)
    phi_mat = [
        [puzzle.phi.component(i).coefficient((a,)) for a in range(4)]
        for i in range(4)
    ]
    det_phi = fm.mat_det(phi_mat)
    coeff = pl.action_density(puzzle).coefficient((0, 1, 2, 3))
    for p in fm.sample_points(chart, 15, seed=3):
        want = 2.0 * ex.evaluate(R, p) * ex.evaluate(det_phi, p)
        assert abs(ex.evaluate(coeff, p) - want) < 1e-8
    assert pl.stationarity_identity_residual(puzzle, samples=10, seed=3) < 1e-8


def test_stationarity_forms_rotate_covariantly():
    """A constant orthogonal frame change mixes the stationarity forms with
    the same matrix that acts on the coframe labels, and in particular
    leaves the max-abs summary unchanged."""
    puzzle = fx.schwarzschild()
    chart = puzzle.chart
    c1, s1 = math.cos(0.3), math.sin(0.3)
    c2, s2 = math.cos(0.7), math.sin(0.7)
    Q = np.array(
        [
            [c1, -s1, 0.0, 0.0],
            [s1, c1, 0.0, 0.0],
            [0.0, 0.0, c2, -s2],
            [0.0, 0.0, s2, c2],
        ]
    )
    phi_new = tuple(
        _combine_forms(chart, 1, Q[i], [puzzle.phi.component(j) for j in range(4)])
        for i in range(4)
    )
    QwQt = np.einsum("ik,jl->ijkl", Q, Q)
    omega_new = tuple(
        tuple(
            _combine_forms(
                chart, 1,
                QwQt[i, j].ravel(),
                [puzzle.omega.entry(k, l) for k in range(4) for l in range(4)],
            )
            for j in range(4)
        )
        for i in range(4)
    )
    rotated = Puzzle(
        chart, 4,
        ConnectionForms(chart, 4, omega_new),
        BundleValuedForm(chart, 4, 1, phi_new),
        fiber_metric=_euclid(chart, 4),
    )
    res = pl.palatini_residual(puzzle, samples=8, seed=4)
    res_rot = pl.palatini_residual(rotated, samples=8, seed=4)
    assert abs(res.max_abs - res_rot.max_abs) < 1e-10
    pts = fm.sample_points(chart, 8, seed=4)
    for l in range(4):
        expected = _combine_forms(chart, 3, Q[l], res.forms)
        diff = fm.form_sub(res_rot.forms[l], expected)
        assert fm.max_abs_on(diff, pts) < 1e-9


def _combine_forms(chart, degree, weights, forms_list):
    acc = fm.zero_form(chart, degree)
    for w, f in zip(weights, forms_list):
        if w == 0.0:
            continue
        acc = fm.form_add(acc, fm.form_scale(float(w), f))
    return acc


def test_gauge_residual_radial_flux_field():
    puzzle = fx.monopole()
    res = pl.yang_mills_residual(puzzle.omega, fx.monopole_chart_metric())
    pts = fm.sample_points(puzzle.chart, 12, seed=5)
    assert len(res) == 1 and len(res[0]) == 1
    assert fm.max_abs_on(res[0][0], pts) < 1e-10


def test_gauge_residual_nonstationary_potential():
    chart = Chart(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    x = ex.variable("x")
    pot = DifferentialForm(chart, 1, {(1,): ex.mul(ex.constant(0.5), ex.mul(x, x))})
    omega = ConnectionForms(chart, 1, ((pot,),))
    res = pl.yang_mills_residual(omega, identity_metric(2))
    want = fm.coordinate_differential(chart, 0)
    diff = fm.form_sub(res[0][0], want)
    assert fm.max_abs_on(diff, fm.sample_points(chart, 10, seed=6)) < 1e-12


def test_quadrature_reports_failure_when_tolerance_unreachable():
    puzzle = fx.round_sphere4()
    with pytest.raises(ValueError, match="did not converge"):
        pl.converge_action(puzzle, tol=0.0, initial_nodes=2, max_doublings=2)


def test_integration_box_validation():
    puzzle = fx.round_sphere4()
    inner = [(0.8, 2.0), (0.8, 2.0), (0.8, 2.0), (0.1, 0.9)]
    outer = [(0.0, 2.0), (0.8, 2.0), (0.8, 2.0), (0.1, 0.9)]
    assert np.isfinite(pl.palatini_action(puzzle, box=inner, nodes=6))
    with pytest.raises(ValueError, match="inside the chart domain"):
        pl.palatini_action(puzzle, box=outer, nodes=6)


def test_dimension_and_degree_rejections():
    with pytest.raises(ValueError, match="chart dimension 4"):
        pl.palatini_residual(fx.polar_coframe())
    with pytest.raises(ValueError, match="degree-1"):
        pl.einstein_residual(fx.quaternion())
