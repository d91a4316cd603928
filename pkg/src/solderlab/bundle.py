"""Connections and bundle-valued forms over a trivialised vector bundle.

Everything is expressed in one fixed global frame (E_1 ... E_n).  A
connection is the matrix of 1-forms omega^i_j defined by nabla E_j =
E_i omega^i_j; bundle-valued p-forms carry one ordinary p-form per frame
component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from . import forms as fm
from .expr import Expr
from .forms import Chart, ChartMap, DifferentialForm

__all__ = [
    "ConnectionForms",
    "CurvatureForms",
    "FiberMetric",
    "BundleValuedForm",
    "zero_connection",
    "covariant_exterior_derivative",
    "curvature",
    "metric_compatibility_residual",
    "parallel_transport",
]


def _check_entries(chart: Chart, entries, degree: int, what: str):
    for row in entries:
        for f in row:
            if not isinstance(f, DifferentialForm):
                raise TypeError(f"{what} entries must be differential forms")
            if f.chart != chart:
                raise fm.ChartMismatch(f"{what} entry on a different chart")
            if f.degree != degree:
                raise ValueError(f"{what} entries must have degree {degree}")


@dataclass(frozen=True)
class ConnectionForms:
    chart: Chart
    rank: int
    entries: tuple[tuple[DifferentialForm, ...], ...]  # entries[i][j] = omega^i_j

    def __post_init__(self):
        if len(self.entries) != self.rank or any(len(r) != self.rank for r in self.entries):
            raise ValueError("connection matrix must be rank x rank")
        _check_entries(self.chart, self.entries, 1, "connection")

    def entry(self, i: int, j: int) -> DifferentialForm:
        return self.entries[i][j]


@dataclass(frozen=True)
class CurvatureForms:
    chart: Chart
    rank: int
    entries: tuple[tuple[DifferentialForm, ...], ...]

    def __post_init__(self):
        if len(self.entries) != self.rank or any(len(r) != self.rank for r in self.entries):
            raise ValueError("curvature matrix must be rank x rank")
        _check_entries(self.chart, self.entries, 2, "curvature")

    def entry(self, i: int, j: int) -> DifferentialForm:
        return self.entries[i][j]


@dataclass(frozen=True)
class FiberMetric:
    chart: Chart
    rank: int
    entries: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        if len(self.entries) != self.rank or any(len(r) != self.rank for r in self.entries):
            raise ValueError("fiber metric must be rank x rank")
        for pt in fm.sample_points(self.chart, 3, seed=1, margin=0.05):
            for i in range(self.rank):
                for j in range(i + 1, self.rank):
                    a = ex.evaluate(self.entries[i][j], pt)
                    b = ex.evaluate(self.entries[j][i], pt)
                    if abs(a - b) > 1e-9 * (1 + abs(a)):
                        raise ValueError("fiber metric must be symmetric")

    def matrix_at(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array(
            [[ex.evaluate(e, point) for e in row] for row in self.entries]
        )


@dataclass(frozen=True)
class BundleValuedForm:
    chart: Chart
    rank: int
    degree: int
    components: tuple[DifferentialForm, ...]

    def __post_init__(self):
        if len(self.components) != self.rank:
            raise ValueError("need one component form per frame vector")
        for f in self.components:
            if f.chart != self.chart:
                raise fm.ChartMismatch("component on a different chart")
            if f.degree != self.degree:
                raise ValueError("components must share the stated degree")

    def component(self, i: int) -> DifferentialForm:
        return self.components[i]

    def max_abs_on(self, points) -> float:
        return max(fm.max_abs_on(c, points) for c in self.components)


def zero_connection(chart: Chart, rank: int) -> ConnectionForms:
    z = fm.zero_form(chart, 1)
    return ConnectionForms(chart, rank, tuple(tuple(z for _ in range(rank)) for _ in range(rank)))


def covariant_exterior_derivative(
    psi: BundleValuedForm, omega: ConnectionForms
) -> BundleValuedForm:
    """Componentwise d psi^i + omega^i_j wedge psi^j."""
    if psi.chart != omega.chart or psi.rank != omega.rank:
        raise ValueError("section and connection must share chart and rank")
    comps = []
    for i in range(psi.rank):
        acc = fm.exterior_derivative(psi.components[i])
        for j in range(psi.rank):
            acc = fm.form_add(acc, fm.wedge(omega.entries[i][j], psi.components[j]))
        comps.append(acc)
    return BundleValuedForm(psi.chart, psi.rank, psi.degree + 1, tuple(comps))


def curvature(omega: ConnectionForms) -> CurvatureForms:
    """Omega^i_j = d omega^i_j + omega^i_k wedge omega^k_j."""
    n = omega.rank
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = fm.exterior_derivative(omega.entries[i][j])
            for k in range(n):
                acc = fm.form_add(acc, fm.wedge(omega.entries[i][k], omega.entries[k][j]))
            row.append(acc)
        rows.append(tuple(row))
    return CurvatureForms(omega.chart, n, tuple(rows))


def metric_compatibility_residual(
    omega: ConnectionForms, g: FiberMetric
) -> list[list[DifferentialForm]]:
    """dg_ij - g_kj omega^k_i - g_ik omega^k_j, one 1-form per (i, j)."""
    if omega.chart != g.chart or omega.rank != g.rank:
        raise ValueError("connection and metric must share chart and rank")
    chart = omega.chart
    n = omega.rank
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = fm.exterior_derivative(fm.function_form(chart, g.entries[i][j]))
            for k in range(n):
                acc = fm.form_add(
                    acc, fm.form_neg(fm.form_scale(g.entries[k][j], omega.entries[k][i]))
                )
                acc = fm.form_add(
                    acc, fm.form_neg(fm.form_scale(g.entries[i][k], omega.entries[k][j]))
                )
            row.append(acc)
        out.append(row)
    return out


def connection_along_curve(omega: ConnectionForms, curve: ChartMap) -> list[list[Expr]]:
    """A_ij(t) = omega^i_j(curve velocity) as expressions of the curve parameter."""
    if curve.source.dim != 1:
        raise ValueError("transport curves must have a one-dimensional source")
    if curve.target != omega.chart:
        raise fm.ChartMismatch("curve does not land in the connection's chart")
    tname = curve.source.names[0]
    subs = curve.substitution()
    velocity = [ex.differentiate(c, tname) for c in curve.components]
    n = omega.rank
    A = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = ex.constant(0.0)
            for (a,), c in omega.entries[i][j].coeffs.items():
                acc = ex.add(acc, ex.mul(ex.substitute(c, subs), velocity[a]))
            A[i][j] = acc
    return A


def parallel_transport(
    omega: ConnectionForms,
    curve: ChartMap,
    v0: Sequence[float],
    steps: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate dv/dt = -omega(curve'(t)) v with classical fixed-step RK4.

    Returns (parameter nodes, transported vectors) with vectors[k] the value
    at node k; vectors[0] is v0.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    n = omega.rank
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (n,):
        raise ValueError(f"initial vector must have {n} components")
    A_expr = connection_along_curve(omega, curve)
    t0, t1 = curve.source.box[0]
    tname = curve.source.names[0]
    # evaluate the connection on the half-step grid in one vectorised pass
    grid = np.linspace(t0, t1, 2 * steps + 1)
    A = np.empty((2 * steps + 1, n, n))
    for i in range(n):
        for j in range(n):
            A[:, i, j] = ex.evaluate_many(A_expr[i][j], {tname: grid})
    h = (t1 - t0) / steps
    vs = np.empty((steps + 1, n))
    vs[0] = v0
    v = v0.copy()
    for k in range(steps):
        a0, am, a1 = A[2 * k], A[2 * k + 1], A[2 * k + 2]
        k1 = -a0 @ v
        k2 = -am @ (v + 0.5 * h * k1)
        k3 = -am @ (v + 0.5 * h * k2)
        k4 = -a1 @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        vs[k + 1] = v
    return np.linspace(t0, t1, steps + 1), vs
