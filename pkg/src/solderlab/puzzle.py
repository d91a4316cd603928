"""Solder-form puzzles: a coordinate chart, a rank-n bundle with connection,
and a bundle-valued p-form phi subject to the integrability equation
d phi^i + omega^i_j wedge phi^j = 0.

This module holds the puzzle container plus the pointwise linear algebra on
phi (rank profile, kernel distribution), the integrability and Frobenius
residuals, the induced metric, chart-map pullback, and the torsion-free
connection solver for full-rank orthonormal coframes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import bundle as bd
from . import expr as ex
from . import forms as fm
from .bundle import BundleValuedForm, ConnectionForms, FiberMetric
from .expr import Expr
from .forms import Chart, ChartMap, DifferentialForm, VectorField

__all__ = [
    "Puzzle",
    "RankProfile",
    "integrability_residual",
    "is_integrable",
    "rank_profile",
    "kernel_distribution",
    "frobenius_residual",
    "induced_metric",
    "pullback_puzzle",
    "torsion_free_connection",
]

_COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class Puzzle:
    """A solder-form puzzle (chart, connection, bundle-valued p-form).

    ``fiber_metric`` is optional; when present it is checked for
    compatibility with the connection at construction time and the result
    is recorded in ``metric_compatible`` (a warning is emitted when the
    check fails, since transport then no longer preserves lengths).
    """

    chart: Chart
    rank: int
    omega: ConnectionForms
    phi: BundleValuedForm
    fiber_metric: Optional[FiberMetric] = None
    name: str = ""
    metric_compatible: Optional[bool] = field(default=None, compare=False)

    def __post_init__(self):
        if self.omega.chart is not self.chart and self.omega.chart != self.chart:
            raise fm.ChartMismatch("connection lives on a different chart")
        if self.phi.chart is not self.chart and self.phi.chart != self.chart:
            raise fm.ChartMismatch("solder form lives on a different chart")
        if self.omega.rank != self.rank or self.phi.rank != self.rank:
            raise ValueError("bundle rank mismatch between connection and solder form")
        if not (1 <= self.phi.degree <= self.chart.dim):
            raise ValueError(
                "solder form degree must lie between 1 and the chart dimension"
            )
        compat = None
        if self.fiber_metric is not None:
            if self.fiber_metric.rank != self.rank:
                raise ValueError("fiber metric size does not match bundle rank")
            compat = self._metric_compatibility_holds()
            if not compat:
                warnings.warn(
                    "connection is not compatible with the fiber metric; "
                    "transport will not preserve fiber lengths",
                    stacklevel=2,
                )
        object.__setattr__(self, "metric_compatible", compat)

    @property
    def degree(self) -> int:
        return self.phi.degree

    def _metric_compatibility_holds(self, samples: int = 50, tol: float = _COMPAT_TOL) -> bool:
        resid = bd.metric_compatibility_residual(self.omega, self.fiber_metric)
        pts = fm.sample_points(self.chart, samples, seed=7)
        worst = 0.0
        for row in resid:
            for entry in row:
                worst = max(worst, fm.max_abs_on(entry, pts))
        return worst <= tol

    def sample_points(self, count: int = 50, seed: int = 0):
        return fm.sample_points(self.chart, count, seed=seed)


def integrability_residual(puzzle: Puzzle) -> BundleValuedForm:
    """d^nabla phi, the obstruction to the puzzle being closed."""
    return bd.covariant_exterior_derivative(puzzle.phi, puzzle.omega)


def is_integrable(puzzle: Puzzle, tol: float = 1e-8, samples: int = 50, seed: int = 0) -> bool:
    resid = integrability_residual(puzzle)
    pts = fm.sample_points(puzzle.chart, samples, seed=seed)
    return resid.max_abs_on(pts) <= tol


def _contraction_matrix(puzzle: Puzzle, point) -> np.ndarray:
    """Matrix of v -> iota_v phi at a point.

    Rows are indexed by (fiber index i, multi-index J) with |J| = p - 1,
    columns by the chart directions; for p = 1 this is just phi^i_a.
    """
    m = puzzle.chart.dim
    p = puzzle.degree
    sub_indices = list(combinations(range(m), p - 1))
    row_of = {(i, J): i * len(sub_indices) + pos
              for i in range(puzzle.rank)
              for pos, J in enumerate(sub_indices)}
    mat = np.zeros((puzzle.rank * len(sub_indices), m))
    for i in range(puzzle.rank):
        comp = puzzle.phi.component(i)
        for idx, coeff in comp.coeffs.items():
            val = ex.evaluate(coeff, point)
            for pos, a in enumerate(idx):
                J = idx[:pos] + idx[pos + 1:]
                mat[row_of[(i, J)], a] += ((-1) ** pos) * val
    return mat


@dataclass(frozen=True)
class RankProfile:
    """Sampled rank data for the contraction map v -> iota_v phi."""

    classification: str
    ranks: tuple
    rank: Optional[int]
    kernel_dim: Optional[int]
    domain_dim: int
    codomain_dim: int


def rank_profile(puzzle: Puzzle, samples: int = 50, seed: int = 0) -> RankProfile:
    """Classify the pointwise rank of phi over sampled chart points.

    The chart center is always included among the samples, and the rank
    threshold is relative to the largest singular value seen anywhere on
    the chart, so a form that degenerates at the center is reported as
    "variable" rather than silently classified from generic points alone.
    """
    pts = [puzzle.chart.center()] + list(fm.sample_points(puzzle.chart, samples, seed=seed))
    mats = [_contraction_matrix(puzzle, pt) for pt in pts]
    all_singulars = [np.linalg.svd(mat, compute_uv=False) for mat in mats]
    sigma_max = max((s[0] for s in all_singulars if s.size), default=0.0)
    threshold = 1e-9 * sigma_max
    ranks = sorted({int(np.sum(s > threshold)) for s in all_singulars})
    m = puzzle.chart.dim
    codomain = mats[0].shape[0]
    if len(ranks) > 1:
        return RankProfile("variable", tuple(ranks), None, None, m, codomain)
    r = ranks[0]
    if r == m and r == codomain:
        label = "isomorphism"
    elif r == m:
        label = "injective"
    elif r == codomain:
        label = "surjective"
    else:
        label = "constant-rank"
    return RankProfile(label, (r,), r, m - r, m, codomain)


def kernel_distribution(puzzle: Puzzle, point) -> np.ndarray:
    """Orthonormal basis (rows) of ker(v -> iota_v phi) at a point."""
    mat = _contraction_matrix(puzzle, point)
    u, s, vt = np.linalg.svd(mat)
    sigma_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > 1e-9 * sigma_max)) if sigma_max > 0 else 0
    return vt[rank:]


def frobenius_residual(
    puzzle: Puzzle,
    x_field: VectorField,
    y_field: VectorField,
    samples: int = 20,
    seed: int = 0,
) -> BundleValuedForm:
    """iota_{[X,Y]} phi, the Frobenius obstruction along two kernel fields.

    Warns when either input field fails to lie in the kernel of phi at the
    sampled points, since the residual is only meaningful for kernel fields.
    """
    pts = fm.sample_points(puzzle.chart, samples, seed=seed)
    for label, vf in (("first", x_field), ("second", y_field)):
        contracted = BundleValuedForm(
            puzzle.chart,
            puzzle.rank,
            puzzle.degree - 1,
            tuple(
                fm.interior_product(vf, puzzle.phi.component(i))
                for i in range(puzzle.rank)
            ),
        )
        if contracted.max_abs_on(pts) > 1e-8:
            warnings.warn(
                f"{label} vector field is not in the kernel of the solder form",
                stacklevel=2,
            )
    bracket = fm.lie_bracket(x_field, y_field)
    comps = tuple(
        fm.interior_product(bracket, puzzle.phi.component(i))
        for i in range(puzzle.rank)
    )
    return BundleValuedForm(puzzle.chart, puzzle.rank, puzzle.degree - 1, comps)


def induced_metric(puzzle: Puzzle) -> list[list[Expr]]:
    """Pullback of the fiber metric along phi (degree-1 puzzles only).

    With no fiber metric on record the Euclidean one is used.  The result
    is an m x m expression matrix g_ab = g_ij phi^i_a phi^j_b; it is a
    genuine metric exactly where phi is injective.
    """
    if puzzle.degree != 1:
        raise ValueError("induced metric requires a degree-1 solder form")
    m = puzzle.chart.dim
    n = puzzle.rank
    coeff = [
        [puzzle.phi.component(i).coefficient((a,)) for a in range(m)]
        for i in range(n)
    ]
    if puzzle.fiber_metric is None:
        gfib = [
            [ex.constant(1.0 if i == j else 0.0) for j in range(n)]
            for i in range(n)
        ]
    else:
        gfib = [list(row) for row in puzzle.fiber_metric.entries]
    out = [[None] * m for _ in range(m)]
    for a in range(m):
        for b in range(a, m):
            acc = ex.constant(0.0)
            for i in range(n):
                for j in range(n):
                    acc = ex.add(acc, ex.mul(gfib[i][j], ex.mul(coeff[i][a], coeff[j][b])))
            out[a][b] = acc
            out[b][a] = acc
    return out


def pullback_puzzle(puzzle: Puzzle, chart_map: ChartMap, name: str = "") -> Puzzle:
    """Pull the whole puzzle back along a chart map into its source chart."""
    if chart_map.target != puzzle.chart:
        raise fm.ChartMismatch("chart map target does not match the puzzle chart")
    n = puzzle.rank
    omega_entries = tuple(
        tuple(fm.pullback_form(chart_map, puzzle.omega.entry(i, j)) for j in range(n))
        for i in range(n)
    )
    comps = tuple(
        fm.pullback_form(chart_map, puzzle.phi.component(i)) for i in range(n)
    )
    metric = None
    if puzzle.fiber_metric is not None:
        subst = chart_map.substitution()
        metric = FiberMetric(
            chart_map.source,
            n,
            tuple(
                tuple(ex.substitute(e, subst) for e in row)
                for row in puzzle.fiber_metric.entries
            ),
        )
    return Puzzle(
        chart_map.source,
        n,
        ConnectionForms(chart_map.source, n, omega_entries),
        BundleValuedForm(chart_map.source, n, puzzle.degree, comps),
        fiber_metric=metric,
        name=name or puzzle.name,
    )


def torsion_free_connection(
    coframe: BundleValuedForm, fiber_metric: Optional[FiberMetric] = None
) -> ConnectionForms:
    """Solve d phi^i + omega^i_j wedge phi^j = 0 with omega antisymmetric.

    ``coframe`` must be a pointwise-invertible frame of degree-1 forms
    (rank equal to the chart dimension) that is orthonormal for the fiber
    metric; the standard structure-coefficient formula then produces the
    unique antisymmetric solution in closed form.  Passing a fiber metric
    other than the identity is rejected, since the cyclic formula lowers
    indices with delta.
    """
    chart = coframe.chart
    m = chart.dim
    if coframe.degree != 1:
        raise ValueError("coframe entries must be 1-forms")
    if coframe.rank != m:
        raise ValueError("coframe rank must equal the chart dimension")
    if fiber_metric is not None:
        pts = fm.sample_points(chart, 5, seed=3)
        for pt in pts:
            gm = fiber_metric.matrix_at(pt)
            if np.max(np.abs(gm - np.eye(m))) > 1e-9:
                raise ValueError(
                    "torsion-free solver requires an orthonormal coframe "
                    "(identity fiber metric)"
                )

    phi_mat = [
        [coframe.component(i).coefficient((a,)) for a in range(m)] for i in range(m)
    ]
    inv, _det = fm.mat_inverse(phi_mat)
    frame_fields = [
        VectorField(chart, tuple(inv[a][j] for a in range(m))) for j in range(m)
    ]
    dphi = [fm.exterior_derivative(coframe.component(i)) for i in range(m)]

    # Structure coefficients c_{ijk} = -(d phi^i)(e_j, e_k).
    c = [[[None] * m for _ in range(m)] for _ in range(m)]
    for i in range(m):
        for j in range(m):
            once = fm.interior_product(frame_fields[j], dphi[i])
            for k in range(m):
                twice = fm.interior_product(frame_fields[k], once)
                c[i][j][k] = ex.neg(twice.coefficient(()))

    def a_coeff(i: int, j: int, k: int) -> Expr:
        s = ex.sub(ex.add(c[i][j][k], c[j][k][i]), c[k][i][j])
        return ex.mul(ex.constant(-0.5), s)

    entries = [[fm.zero_form(chart, 1) for _ in range(m)] for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            acc = fm.zero_form(chart, 1)
            for k in range(m):
                acc = fm.form_add(acc, fm.form_scale(a_coeff(i, j, k), coframe.component(k)))
            entries[i][j] = acc
            entries[j][i] = fm.form_neg(acc)
    return ConnectionForms(chart, m, tuple(tuple(row) for row in entries))
