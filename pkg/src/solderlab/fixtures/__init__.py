"""Built-in puzzle corpus used by the test suite and the command line.

Each constructor returns a fully assembled Puzzle; the same data ships as
TOML files under ``solderlab/fixtures`` for the CLI.  Charts are chosen to
stay away from coordinate singularities (poles, horizons, branch points).
"""

from __future__ import annotations

from .. import bundle as bd
from .. import expr as ex
from .. import forms as fm
from ..bundle import BundleValuedForm, ConnectionForms, FiberMetric
from ..forms import Chart, DifferentialForm
from ..puzzle import Puzzle

__all__ = ["ALL", "monopole_chart_metric", "helix_frenet_completion"]


def _p(chart: Chart, text: str) -> ex.Expr:
    return ex.parse_expr(text, chart.names)


def _form1(chart: Chart, coeffs: dict[int, str]) -> DifferentialForm:
    return DifferentialForm(
        chart, 1, {(a,): _p(chart, s) for a, s in coeffs.items()}
    )


def _so_connection(chart: Chart, rank: int, upper: dict[tuple[int, int], DifferentialForm]) -> ConnectionForms:
    """Antisymmetric connection matrix from its strictly-upper entries."""
    z = fm.zero_form(chart, 1)
    entries = [[z for _ in range(rank)] for _ in range(rank)]
    for (i, j), form in upper.items():
        entries[i][j] = form
        entries[j][i] = fm.form_neg(form)
    return ConnectionForms(chart, rank, tuple(tuple(r) for r in entries))


def _euclidean(chart: Chart, rank: int) -> FiberMetric:
    return FiberMetric(
        chart, rank,
        tuple(
            tuple(ex.constant(1.0 if i == j else 0.0) for j in range(rank))
            for i in range(rank)
        ),
    )


def flat() -> Puzzle:
    chart = Chart(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    phi = BundleValuedForm(
        chart, 2, 1,
        (fm.coordinate_differential(chart, 0), fm.coordinate_differential(chart, 1)),
    )
    return Puzzle(chart, 2, bd.zero_connection(chart, 2), phi,
                  fiber_metric=_euclidean(chart, 2), name="f1_flat")


def sphere_graph() -> Puzzle:
    chart = Chart(("x1", "x2"), ((-0.6, 0.6), (-0.6, 0.6)))
    w = _p(chart, "sqrt(1 - (x1*x1 + x2*x2))")
    comps = tuple(
        fm.exterior_derivative(fm.function_form(chart, e))
        for e in (_p(chart, "x1"), _p(chart, "x2"), w)
    )
    phi = BundleValuedForm(chart, 3, 1, comps)
    return Puzzle(chart, 3, bd.zero_connection(chart, 3), phi,
                  fiber_metric=_euclidean(chart, 3), name="f2_sphere")


def projection() -> Puzzle:
    chart = Chart(("x", "y", "z"), ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)))
    phi = BundleValuedForm(
        chart, 2, 1,
        (fm.coordinate_differential(chart, 0), fm.coordinate_differential(chart, 1)),
    )
    return Puzzle(chart, 2, bd.zero_connection(chart, 2), phi,
                  fiber_metric=_euclidean(chart, 2), name="f3_projection")


def quaternion() -> Puzzle:
    chart = Chart(
        ("q0", "q1", "q2", "q3"),
        ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
    )
    one = ex.constant(1.0)
    phi_j = DifferentialForm(chart, 2, {(0, 2): ex.neg(one), (1, 3): one})
    phi_k = DifferentialForm(chart, 2, {(0, 3): ex.neg(one), (1, 2): ex.neg(one)})
    phi = BundleValuedForm(chart, 2, 2, (phi_j, phi_k))
    return Puzzle(chart, 2, bd.zero_connection(chart, 2), phi, name="f4_quaternion")


def exponential() -> Puzzle:
    chart = Chart(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    phi = BundleValuedForm(chart, 1, 1, (_form1(chart, {1: "exp(x)"}),))
    omega = ConnectionForms(chart, 1, ((_form1(chart, {0: "-1"}),),))
    metric = FiberMetric(chart, 1, ((_p(chart, "exp(-2*x)"),),))
    return Puzzle(chart, 1, omega, phi, fiber_metric=metric, name="f6_exponential")


def contact() -> Puzzle:
    chart = Chart(("x", "y", "z"), ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)))
    phi = BundleValuedForm(chart, 1, 1, (_form1(chart, {0: "-y", 2: "1"}),))
    return Puzzle(chart, 1, bd.zero_connection(chart, 1), phi, name="contact")


def x_dy() -> Puzzle:
    chart = Chart(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))
    phi = BundleValuedForm(chart, 1, 1, (_form1(chart, {1: "x"}),))
    return Puzzle(chart, 1, bd.zero_connection(chart, 1), phi, name="x_dy")


def helix() -> Puzzle:
    chart = Chart(("u",), ((0.3, 5.0),))
    comps = (
        _form1(chart, {0: "-sin(u/sqrt(2))/sqrt(2)"}),
        _form1(chart, {0: "cos(u/sqrt(2))/sqrt(2)"}),
        _form1(chart, {0: "1/sqrt(2)"}),
    )
    phi = BundleValuedForm(chart, 3, 1, comps)
    return Puzzle(chart, 3, bd.zero_connection(chart, 3), phi,
                  fiber_metric=_euclidean(chart, 3), name="helix")


def helix_frenet_completion():
    """Principal normal and binormal of the unit-pitch helix (arc length)."""
    u = ex.variable("u")
    root2 = ex.sqrt(ex.constant(2.0))
    arg = ex.div(u, root2)
    N = (ex.neg(ex.cos(arg)), ex.neg(ex.sin(arg)), ex.constant(0.0))
    B = (
        ex.div(ex.sin(arg), root2),
        ex.neg(ex.div(ex.cos(arg), root2)),
        ex.div(ex.constant(1.0), root2),
    )
    return [N, B]


def schwarzschild() -> Puzzle:
    """Static spherically symmetric vacuum coframe (unit mass, Riemannian
    signature), on a chart safely outside r = 2."""
    chart = Chart(
        ("tau", "r", "theta", "ph"),
        ((0.0, 1.0), (3.0, 4.0), (1.0, 2.0), (0.0, 1.0)),
    )
    f = "sqrt(1 - 2/r)"
    phi = BundleValuedForm(
        chart, 4, 1,
        (
            _form1(chart, {0: f}),
            _form1(chart, {1: f"1/{f}"}),
            _form1(chart, {2: "r"}),
            _form1(chart, {3: "r*sin(theta)"}),
        ),
    )
    omega = _so_connection(
        chart, 4,
        {
            (0, 1): _form1(chart, {0: "1/r^2"}),
            (2, 1): _form1(chart, {2: f}),
            (3, 1): _form1(chart, {3: f"{f}*sin(theta)"}),
            (3, 2): _form1(chart, {3: "cos(theta)"}),
        },
    )
    return Puzzle(chart, 4, omega, phi, fiber_metric=_euclidean(chart, 4),
                  name="schwarzschild")


def round_sphere4() -> Puzzle:
    """Unit four-sphere in nested polar coordinates, away from the poles."""
    chart = Chart(
        ("a", "b", "c", "d"),
        ((0.6, 2.4), (0.6, 2.4), (0.6, 2.4), (0.0, 1.0)),
    )
    phi = BundleValuedForm(
        chart, 4, 1,
        (
            _form1(chart, {0: "1"}),
            _form1(chart, {1: "sin(a)"}),
            _form1(chart, {2: "sin(a)*sin(b)"}),
            _form1(chart, {3: "sin(a)*sin(b)*sin(c)"}),
        ),
    )
    omega = _so_connection(
        chart, 4,
        {
            (1, 0): _form1(chart, {1: "cos(a)"}),
            (2, 0): _form1(chart, {2: "cos(a)*sin(b)"}),
            (2, 1): _form1(chart, {2: "cos(b)"}),
            (3, 0): _form1(chart, {3: "cos(a)*sin(b)*sin(c)"}),
            (3, 1): _form1(chart, {3: "cos(b)*sin(c)"}),
            (3, 2): _form1(chart, {3: "cos(c)"}),
        },
    )
    return Puzzle(chart, 4, omega, phi, fiber_metric=_euclidean(chart, 4),
                  name="round_s4")


def polar_coframe() -> Puzzle:
    chart = Chart(("r", "phi"), ((0.5, 2.0), (0.1, 3.0)))
    phi = BundleValuedForm(
        chart, 2, 1, (_form1(chart, {0: "1"}), _form1(chart, {1: "r"}))
    )
    omega = _so_connection(chart, 2, {(0, 1): _form1(chart, {1: "-1"})})
    return Puzzle(chart, 2, omega, phi, fiber_metric=_euclidean(chart, 2),
                  name="polar_coframe")


def sphere_coframe() -> Puzzle:
    chart = Chart(("theta", "phi"), ((0.4, 2.7), (0.1, 3.0)))
    phi = BundleValuedForm(
        chart, 2, 1, (_form1(chart, {0: "1"}), _form1(chart, {1: "sin(theta)"}))
    )
    omega = _so_connection(chart, 2, {(0, 1): _form1(chart, {1: "-cos(theta)"})})
    return Puzzle(chart, 2, omega, phi, fiber_metric=_euclidean(chart, 2),
                  name="sphere_coframe")


def monopole() -> Puzzle:
    """Abelian field with radial flux through spheres; the solder form is a
    placeholder (the fixture exists for the gauge residual)."""
    chart = Chart(("r", "theta", "ph"), ((1.5, 3.0), (0.5, 2.5), (0.0, 1.0)))
    phi = BundleValuedForm(chart, 1, 1, (_form1(chart, {0: "1"}),))
    omega = ConnectionForms(chart, 1, ((_form1(chart, {2: "-cos(theta)"}),),))
    return Puzzle(chart, 1, omega, phi, name="monopole")


def monopole_chart_metric():
    chart = monopole().chart
    return [
        [_p(chart, "1"), _p(chart, "0"), _p(chart, "0")],
        [_p(chart, "0"), _p(chart, "r^2"), _p(chart, "0")],
        [_p(chart, "0"), _p(chart, "0"), _p(chart, "r^2*sin(theta)^2")],
    ]


ALL = {
    "f1_flat": flat,
    "f2_sphere": sphere_graph,
    "f3_projection": projection,
    "f4_quaternion": quaternion,
    "f6_exponential": exponential,
    "contact": contact,
    "x_dy": x_dy,
    "helix": helix,
    "schwarzschild": schwarzschild,
    "round_s4": round_sphere4,
    "polar_coframe": polar_coframe,
    "sphere_coframe": sphere_coframe,
    "monopole": monopole,
}
