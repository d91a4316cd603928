"""Connection calculus: covariant derivatives, curvature identities,
metric compatibility, parallel transport."""

from __future__ import annotations

import math

import numpy as np
import pytest

from solderlab import bundle as bd
from solderlab import expr as ex
from solderlab import forms as fm
from helpers import box_chart, forms_close, random_form

def random_connection(rng, chart, rank) -> bd.ConnectionForms:
    rows = []
    for i in range(rank):
        row = []
        for j in range(rank):
            row.append(random_form(rng, chart, 1))
        rows.append(tuple(row))
    return bd.ConnectionForms(chart, rank, tuple(rows))


def random_bundle_form(rng, chart, rank, degree) -> bd.BundleValuedForm:
    return bd.BundleValuedForm(
        chart, rank, degree, tuple(random_form(rng, chart, degree) for _ in range(rank))
    )


def test_zero_connection_reduces_to_plain_d():
    rng = np.random.default_rng(3)
    chart = box_chart("x y z")
    omega = bd.zero_connection(chart, 2)
    psi = random_bundle_form(rng, chart, 2, 1)
    out = bd.covariant_exterior_derivative(psi, omega)
    pts = fm.sample_points(chart, 6, seed=2)
    for i in range(2):
        forms_close(out.components[i], fm.exterior_derivative(psi.components[i]), pts, 1e-12)


def test_exponential_weight_is_covariantly_closed():
    # psi = e^x dy with omega = -dx kills the covariant derivative exactly
    chart = box_chart("x y")
    ext = ex.parse_expr("exp(x)", chart.names)
    psi = bd.BundleValuedForm(
        chart, 1, 1, (fm.DifferentialForm(chart, 1, {(1,): ext}),)
    )
    omega = bd.ConnectionForms(
        chart, 1, ((fm.DifferentialForm(chart, 1, {(0,): ex.constant(-1.0)}),),)
    )
    out = bd.covariant_exterior_derivative(psi, omega)
    pts = fm.sample_points(chart, 10, seed=4)
    assert out.max_abs_on(pts) <= 1e-12


def test_ricci_identity():
    # d_nabla(d_nabla psi) = Omega wedge psi for arbitrary connections
    rng = np.random.default_rng(5)
    chart = box_chart("x y z")
    pts = fm.sample_points(chart, 8, seed=6)
    for rank in (1, 2, 3):
        omega = random_connection(rng, chart, rank)
        Om = bd.curvature(omega)
        for degree in (0, 1):
            psi = random_bundle_form(rng, chart, rank, degree)
            twice = bd.covariant_exterior_derivative(
                bd.covariant_exterior_derivative(psi, omega), omega
            )
            for i in range(rank):
                expected = fm.zero_form(chart, degree + 2)
                for j in range(rank):
                    expected = fm.form_add(
                        expected, fm.wedge(Om.entries[i][j], psi.components[j])
                    )
                forms_close(twice.components[i], expected, pts, 1e-9)


def test_bianchi_identity():
    rng = np.random.default_rng(7)
    chart = box_chart("x y z")
    pts = fm.sample_points(chart, 8, seed=8)
    for rank in (2, 3):
        omega = random_connection(rng, chart, rank)
        Om = bd.curvature(omega)
        for i in range(rank):
            for j in range(rank):
                acc = fm.exterior_derivative(Om.entries[i][j])
                for k in range(rank):
                    acc = fm.form_add(acc, fm.wedge(omega.entries[i][k], Om.entries[k][j]))
                    acc = fm.form_add(acc, fm.form_neg(fm.wedge(Om.entries[i][k], omega.entries[k][j])))
                forms_close(acc, fm.zero_form(chart, 3), pts, 1e-9)


def test_sphere_spin_connection_curvature():
    # omega^1_2 = -cos(th) dph on the sphere coframe has curvature sin(th) dth^dph
    chart = fm.Chart(("th", "ph"), ((0.4, 2.7), (0.0, 1.5)))
    mc = ex.parse_expr("-cos(th)", chart.names)
    z = fm.zero_form(chart, 1)
    omega = bd.ConnectionForms(
        chart,
        2,
        (
            (z, fm.DifferentialForm(chart, 1, {(1,): mc})),
            (fm.DifferentialForm(chart, 1, {(1,): ex.neg(mc)}), z),
        ),
    )
    Om = bd.curvature(omega)
    pts = fm.sample_points(chart, 10, seed=9)
    for pt in pts:
        got = fm.evaluate_form(Om.entries[0][1], pt, ([1, 0], [0, 1]))
        assert got == pytest.approx(math.sin(pt["th"]), rel=1e-12)


def test_metric_compatibility():
    chart = box_chart("x y")
    # antisymmetric omega is compatible with the identity metric
    w = fm.DifferentialForm(chart, 1, {(0,): ex.variable("y")})
    omega = bd.ConnectionForms(
        chart, 2, ((fm.zero_form(chart, 1), w), (fm.form_neg(w), fm.zero_form(chart, 1)))
    )
    delta = bd.FiberMetric(
        chart, 2, ((ex.constant(1.0), ex.constant(0.0)), (ex.constant(0.0), ex.constant(1.0)))
    )
    res = bd.metric_compatibility_residual(omega, delta)
    pts = fm.sample_points(chart, 8, seed=11)
    for row in res:
        for f in row:
            assert fm.max_abs_on(f, pts) <= 1e-12

    # exponential weight metric: g = e^{-2x}, omega = -dx
    g1 = bd.FiberMetric(chart, 1, ((ex.parse_expr("exp(-2*x)", chart.names),),))
    om1 = bd.ConnectionForms(
        chart, 1, ((fm.DifferentialForm(chart, 1, {(0,): ex.constant(-1.0)}),),)
    )
    res1 = bd.metric_compatibility_residual(om1, g1)
    assert fm.max_abs_on(res1[0][0], pts) <= 1e-12

    # broken pair leaves a visible residual
    res_bad = bd.metric_compatibility_residual(bd.zero_connection(chart, 1), g1)
    assert fm.max_abs_on(res_bad[0][0], pts) > 0.1


def test_parallel_transport_rotation():
    chart = box_chart("x y")
    w = fm.DifferentialForm(chart, 1, {(0,): ex.constant(-1.0)})
    omega = bd.ConnectionForms(
        chart, 2, ((fm.zero_form(chart, 1), w), (fm.form_neg(w), fm.zero_form(chart, 1)))
    )
    interval = fm.Chart(("t",), ((0.0, 1.0),))
    curve = fm.ChartMap(interval, chart, (ex.variable("t"), ex.constant(0.0)))
    ts, vs = bd.parallel_transport(omega, curve, [1.0, 0.0], steps=1000)
    assert vs.shape == (1001, 2)
    # v' = [[0, 1], [-1, 0]] v  =>  (cos t, -sin t)
    assert vs[-1] == pytest.approx([math.cos(1.0), -math.sin(1.0)], abs=1e-12)
    # norm is preserved by the antisymmetric connection
    assert np.max(np.abs(np.linalg.norm(vs, axis=1) - 1.0)) <= 1e-12


def test_parallel_transport_fourth_order():
    # polar rotation connection: transport around an arc, compare to the exact
    # rotation, and confirm the error scales like h^4
    chart = fm.Chart(("r", "ph"), ((0.5, 2.0), (0.0, 6.0)))
    w = fm.DifferentialForm(chart, 1, {(1,): ex.constant(-1.0)})
    omega = bd.ConnectionForms(
        chart, 2, ((fm.zero_form(chart, 1), w), (fm.form_neg(w), fm.zero_form(chart, 1)))
    )
    angle = 5.5
    interval = fm.Chart(("t",), ((0.0, angle),))
    curve = fm.ChartMap(interval, chart, (ex.constant(1.0), ex.variable("t")))
    exact = np.array([math.cos(angle), -math.sin(angle)])

    def end_error(steps):
        _, vs = bd.parallel_transport(omega, curve, [1.0, 0.0], steps=steps)
        return np.max(np.abs(vs[-1] - exact))

    e1, e2 = end_error(16), end_error(32)
    order = math.log2(e1 / e2)
    assert order >= 3.9
