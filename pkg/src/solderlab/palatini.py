"""First-order gravity residuals for four-dimensional full-rank puzzles,
plus the gauge-field residual for connections over a metric chart.

The stationarity 3-forms are lambda_l = eps_{ijkl} Omega^{ij} wedge phi^k
with indices raised by the fiber metric and eps the alternating symbol on
four labels.  For a torsion-free orthonormal coframe they equal twice the
frame Einstein tensor contracted into the volume form, so their vanishing
together with integrability encodes the vacuum field equations; the
classical route (Christoffels of the induced metric) is exposed separately
as ``einstein_residual`` so the two can be compared.  The action density
eps_{ijkl} Omega^{ij} wedge phi^k wedge phi^l is twice the scalar
curvature times the volume form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bundle as bd
from . import expr as ex
from . import forms as fm
from . import puzzle as pz
from . import riemann as rm
from .bundle import ConnectionForms
from .expr import Expr
from .forms import DifferentialForm
from .puzzle import Puzzle

__all__ = [
    "PalatiniResidual",
    "palatini_residual",
    "action_density",
    "palatini_action",
    "QuadratureResult",
    "converge_action",
    "TensorSamples",
    "einstein_residual",
    "einstein_tensor_frame",
    "stationarity_identity_residual",
    "yang_mills_residual",
]


def _perm_sign(idx: tuple[int, ...]) -> int:
    if len(set(idx)) != len(idx):
        return 0
    sign = 1
    lst = list(idx)
    for i in range(len(lst)):
        for j in range(i + 1, len(lst)):
            if lst[i] > lst[j]:
                sign = -sign
    return sign


def _require_four(puzzle: Puzzle):
    if puzzle.chart.dim != 4 or puzzle.rank != 4 or puzzle.degree != 1:
        raise ValueError(
            "stationarity forms need a degree-1 solder form with chart "
            "dimension 4 and bundle rank 4"
        )


def _fiber_inverse(puzzle: Puzzle):
    n = puzzle.rank
    if puzzle.fiber_metric is None:
        return [
            [ex.constant(1.0 if i == j else 0.0) for j in range(n)] for i in range(n)
        ]
    inv, _ = fm.mat_inverse([list(r) for r in puzzle.fiber_metric.entries])
    return inv


def _lambda_forms(puzzle: Puzzle) -> list[DifferentialForm]:
    _require_four(puzzle)
    curv = bd.curvature(puzzle.omega)
    ginv = _fiber_inverse(puzzle)
    omega_up = [[fm.zero_form(puzzle.chart, 2) for _ in range(4)] for _ in range(4)]
    for i in range(4):
        for j in range(4):
            acc = fm.zero_form(puzzle.chart, 2)
            for s in range(4):
                acc = fm.form_add(acc, fm.form_scale(ginv[s][j], curv.entry(i, s)))
            omega_up[i][j] = acc
    out = []
    for l in range(4):
        acc = fm.zero_form(puzzle.chart, 3)
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    sign = _perm_sign((i, j, k, l))
                    if sign == 0:
                        continue
                    term = fm.wedge(omega_up[i][j], puzzle.phi.component(k))
                    acc = fm.form_add(acc, fm.form_scale(float(sign), term))
        out.append(acc)
    return out


@dataclass(frozen=True)
class PalatiniResidual:
    """The four stationarity 3-forms and their max-abs over sample points."""

    forms: tuple[DifferentialForm, ...]
    max_abs: float

    def __post_init__(self):
        if len(self.forms) != 4 or any(f.degree != 3 for f in self.forms):
            raise ValueError("expected four 3-forms")


def palatini_residual(
    puzzle: Puzzle, samples: int = 50, seed: int = 0
) -> PalatiniResidual:
    """The stationarity 3-forms lambda_l = eps_{ijkl} Omega^{ij} ^ phi^k."""
    lam = _lambda_forms(puzzle)
    pts = fm.sample_points(puzzle.chart, samples, seed=seed)
    worst = max(fm.max_abs_on(f, pts) for f in lam)
    return PalatiniResidual(tuple(lam), worst)


def action_density(puzzle: Puzzle) -> DifferentialForm:
    """The 4-form eps_{ijkl} Omega^{ij} ^ phi^k ^ phi^l."""
    lam = _lambda_forms(puzzle)
    acc = fm.zero_form(puzzle.chart, 4)
    for l in range(4):
        acc = fm.form_add(acc, fm.wedge(lam[l], puzzle.phi.component(l)))
    return acc


def _check_box(chart, box) -> list[tuple[float, float]]:
    if box is None:
        return [tuple(b) for b in chart.box]
    box = [tuple(float(x) for x in b) for b in box]
    if len(box) != chart.dim or any(len(b) != 2 for b in box):
        raise ValueError("integration box must give (lo, hi) per coordinate")
    for (lo, hi), (clo, chi) in zip(box, chart.box):
        if not (clo <= lo < hi <= chi):
            raise ValueError("integration box must sit inside the chart domain")
    return box


def _gauss_integrate(coeff: Expr, chart, box, nodes: int) -> float:
    axes = []
    weights = []
    for lo, hi in box:
        x, w = np.polynomial.legendre.leggauss(nodes)
        axes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    grids = np.meshgrid(*axes, indexing="ij")
    wgrids = np.meshgrid(*weights, indexing="ij")
    arrays = {nm: g.ravel() for nm, g in zip(chart.names, grids)}
    vals = ex.evaluate_many(coeff, arrays)
    total_w = np.ones_like(vals)
    for wg in wgrids:
        total_w = total_w * wg.ravel()
    return float(np.sum(vals * total_w))


def palatini_action(
    puzzle: Puzzle,
    box: Optional[Sequence[Sequence[float]]] = None,
    nodes: int = 12,
) -> float:
    """Gauss-Legendre tensor quadrature of the action density's coefficient
    over ``box`` (default: the whole chart box), ``nodes`` points per axis."""
    dens = action_density(puzzle)
    coeff = dens.coefficient((0, 1, 2, 3))
    return _gauss_integrate(coeff, puzzle.chart, _check_box(puzzle.chart, box), nodes)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    nodes_per_axis: int
    error_estimate: float


def converge_action(
    puzzle: Puzzle,
    tol: float = 1e-8,
    initial_nodes: int = 4,
    max_doublings: int = 5,
    box: Optional[Sequence[Sequence[float]]] = None,
) -> QuadratureResult:
    """Double quadrature nodes until two successive action values agree to
    ``tol`` (relative to the value's size)."""
    dens = action_density(puzzle)
    coeff = dens.coefficient((0, 1, 2, 3))
    checked = _check_box(puzzle.chart, box)
    nodes = initial_nodes
    prev = _gauss_integrate(coeff, puzzle.chart, checked, nodes)
    for _ in range(max_doublings):
        nodes *= 2
        cur = _gauss_integrate(coeff, puzzle.chart, checked, nodes)
        err = abs(cur - prev)
        if err <= tol * (1.0 + abs(cur)):
            return QuadratureResult(cur, nodes, err)
        prev = cur
    raise ValueError(
        f"quadrature did not converge to {tol} after doubling to {nodes} nodes per axis"
    )


@dataclass(frozen=True)
class TensorSamples:
    """A symmetric chart tensor evaluated on sample points."""

    points: tuple[dict, ...]
    values: np.ndarray  # shape (len(points), m, m)

    @property
    def max_abs(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.abs(self.values)))


def einstein_residual(puzzle: Puzzle, samples: int = 50, seed: int = 0) -> TensorSamples:
    """Einstein tensor of the induced metric, Ric - (R/2) g, at sample points.

    This is the classical second-order route (Christoffels, curvature,
    traces), fully independent of the connection entering the stationarity
    forms; a vacuum coframe makes every sampled entry vanish.
    """
    chart = puzzle.chart
    g_ind = pz.induced_metric(puzzle)
    G = rm.einstein_tensor(g_ind, chart)
    pts = tuple(fm.sample_points(chart, samples, seed=seed))
    m = chart.dim
    vals = np.empty((len(pts), m, m))
    for idx, p in enumerate(pts):
        for i in range(m):
            for j in range(m):
                vals[idx, i, j] = ex.evaluate(G[i][j], p)
    return TensorSamples(pts, vals)


def _frame_data(puzzle: Puzzle):
    m = puzzle.chart.dim
    phi_mat = [
        [puzzle.phi.component(i).coefficient((a,)) for a in range(m)]
        for i in range(puzzle.rank)
    ]
    inv, det = fm.mat_inverse(phi_mat)
    return phi_mat, inv, det


def einstein_tensor_frame(puzzle: Puzzle) -> list[list[Expr]]:
    """Einstein tensor of the induced metric, pushed to frame indices."""
    _require_four(puzzle)
    g_ind = pz.induced_metric(puzzle)
    G = rm.einstein_tensor(g_ind, puzzle.chart)
    _phi_mat, inv, _det = _frame_data(puzzle)
    m = puzzle.chart.dim
    out = [[None] * m for _ in range(m)]
    for l in range(m):
        for d in range(m):
            acc = ex.constant(0.0)
            for a in range(m):
                for b in range(m):
                    acc = ex.add(acc, ex.mul(ex.mul(inv[a][l], inv[b][d]), G[a][b]))
            out[l][d] = acc
    return out


def stationarity_identity_residual(
    puzzle: Puzzle, samples: int = 20, seed: int = 0
) -> float:
    """Deviation of lambda_l from 2 G_{ld} iota_{e_d} vol over sample points.

    Zero (to roundoff) exactly when the stationarity forms encode the
    Einstein tensor of the induced metric, which ties the first-order and
    second-order routes together for torsion-free orthonormal coframes.
    """
    _require_four(puzzle)
    lam = _lambda_forms(puzzle)
    G_frame = einstein_tensor_frame(puzzle)
    _phi_mat, inv, det = _frame_data(puzzle)
    chart = puzzle.chart
    root_fib = ex.constant(1.0)
    if puzzle.fiber_metric is not None:
        root_fib = ex.sqrt(fm.mat_det([list(r) for r in puzzle.fiber_metric.entries]))
    vol = DifferentialForm(chart, 4, {(0, 1, 2, 3): ex.mul(det, root_fib)})
    frame_fields = [
        fm.VectorField(chart, tuple(inv[a][d] for a in range(4))) for d in range(4)
    ]
    pts = fm.sample_points(chart, samples, seed=seed)
    worst = 0.0
    for l in range(4):
        rhs = fm.zero_form(chart, 3)
        for d in range(4):
            term = fm.interior_product(frame_fields[d], vol)
            rhs = fm.form_add(
                rhs, fm.form_scale(ex.mul(ex.constant(2.0), G_frame[l][d]), term)
            )
        diff = fm.form_sub(lam[l], rhs)
        worst = max(worst, fm.max_abs_on(diff, pts))
    return worst


def yang_mills_residual(
    omega: ConnectionForms, chart_metric: Sequence[Sequence[Expr]]
) -> list[list[DifferentialForm]]:
    """Covariant exterior derivative of the dual field strength, entrywise
    d(*Omega) + omega ^ *Omega - (-1)^p *Omega ^ omega with p = deg(*Omega).

    ``chart_metric`` is the base metric used for the Hodge star; the
    result entries are (m - 1)-forms that vanish exactly on solutions of
    the source-free gauge field equations.  The graded sign on the second
    wedge is what makes abelian fields drop the commutator in any chart
    dimension (for m = 4 the dual strength has even degree and the sign
    is the familiar minus).
    """
    chart = omega.chart
    n = omega.rank
    curv = bd.curvature(omega)
    star = [[fm.hodge_star(curv.entry(i, j), chart_metric) for j in range(n)]
            for i in range(n)]
    star_degree = chart.dim - 2
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = fm.exterior_derivative(star[i][j])
            for k in range(n):
                acc = fm.form_add(acc, fm.wedge(omega.entry(i, k), star[k][j]))
                tail = fm.wedge(star[i][k], omega.entry(k, j))
                if star_degree % 2 == 0:
                    acc = fm.form_sub(acc, tail)
                else:
                    acc = fm.form_add(acc, tail)
            row.append(acc)
        out.append(row)
    return out
