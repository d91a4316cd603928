"""Exterior calculus over a single coordinate chart.

Differential forms are stored sparsely: a map from strictly increasing index
tuples to coefficient expressions.  An absent index means a zero coefficient,
so forms of degree larger than the chart dimension exist only as zero forms.
All coefficients are expr.Expr trees, which keeps every operation exact up to
floating point evaluation at the end.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr

__all__ = [
    "Chart",
    "DifferentialForm",
    "VectorField",
    "ChartMap",
    "ChartMismatch",
    "zero_form",
    "function_form",
    "coordinate_differential",
    "form_add",
    "form_scale",
    "form_neg",
    "wedge",
    "exterior_derivative",
    "interior_product",
    "evaluate_form",
    "pullback_form",
    "hodge_star",
    "lie_bracket",
    "sample_points",
    "mat_det",
    "mat_inverse",
    "mat_mul",
]


class ChartMismatch(ValueError):
    """Operands live on different charts."""


@dataclass(frozen=True)
class Chart:
    """An open box in R^m with named coordinates."""

    names: tuple[str, ...]
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("coordinate names must be distinct")
        if len(self.box) != len(self.names):
            raise ValueError("domain box must give one interval per coordinate")
        for name in self.names:
            ex.variable(name)  # raises on malformed identifiers
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError(f"degenerate interval ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.names)

    def var(self, a: int) -> Expr:
        return ex.variable(self.names[a])

    def center(self) -> dict[str, float]:
        return {n: 0.5 * (lo + hi) for n, (lo, hi) in zip(self.names, self.box)}

    def point(self, **coords: float) -> dict[str, float]:
        if set(coords) != set(self.names):
            raise ValueError(f"point must assign exactly {self.names}")
        return {n: float(coords[n]) for n in self.names}

    def contains(self, point: Mapping[str, float], tol: float = 0.0) -> bool:
        return all(
            lo - tol <= point[n] <= hi + tol for n, (lo, hi) in zip(self.names, self.box)
        )


def sample_points(
    chart: Chart, count: int, seed: int = 0, margin: float = 0.0
) -> list[dict[str, float]]:
    """Deterministic uniform samples inside the chart box.  margin shrinks the
    box fractionally on each side (handy when coefficients blow up at edges)."""
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(count):
        pt = {}
        for n, (lo, hi) in zip(chart.names, chart.box):
            u = margin + (1.0 - 2.0 * margin) * rng.random()
            pt[n] = lo + u * (hi - lo)
        pts.append(pt)
    return pts


def _check_index(idx: tuple[int, ...], degree: int, dim: int):
    if len(idx) != degree:
        raise ValueError(f"index {idx} has length {len(idx)}, expected {degree}")
    if any(not 0 <= i < dim for i in idx):
        raise ValueError(f"index {idx} out of range for dimension {dim}")
    if any(idx[k] >= idx[k + 1] for k in range(len(idx) - 1)):
        raise ValueError(f"index {idx} must be strictly increasing")


def _is_zero_expr(e: Expr) -> bool:
    return isinstance(e, ex.Const) and e.value == 0.0


@dataclass(frozen=True)
class DifferentialForm:
    chart: Chart
    degree: int
    coeffs: dict[tuple[int, ...], Expr] = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        pruned = {}
        for idx, c in self.coeffs.items():
            idx = tuple(int(i) for i in idx)
            _check_index(idx, self.degree, self.chart.dim)
            if not _is_zero_expr(c):
                pruned[idx] = c
        if self.degree > self.chart.dim and pruned:
            raise ValueError("degree exceeds chart dimension; only the zero form exists")
        object.__setattr__(self, "coeffs", pruned)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, idx: tuple[int, ...]) -> Expr:
        return self.coeffs.get(tuple(idx), ex.constant(0.0))

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        names = self.chart.names
        parts = []
        for idx in sorted(self.coeffs):
            basis = "^".join(f"d{names[i]}" for i in idx)
            c = ex.to_string(self.coeffs[idx])
            parts.append(f"({c}) {basis}" if basis else f"({c})")
        return " + ".join(parts)


def zero_form(chart: Chart, degree: int) -> DifferentialForm:
    return DifferentialForm(chart, degree, {})


def function_form(chart: Chart, e: Expr) -> DifferentialForm:
    return DifferentialForm(chart, 0, {(): e})


def coordinate_differential(chart: Chart, a: int) -> DifferentialForm:
    return DifferentialForm(chart, 1, {(a,): ex.constant(1.0)})


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.components) != self.chart.dim:
            raise ValueError("vector field needs one component per coordinate")

    def evaluate(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([ex.evaluate(c, point) for c in self.components])


@dataclass(frozen=True)
class ChartMap:
    """Smooth map between charts, one target-coordinate expression per output."""

    source: Chart
    target: Chart
    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.components) != self.target.dim:
            raise ValueError("chart map needs one component per target coordinate")

    def jacobian(self) -> list[list[Expr]]:
        return [
            [ex.differentiate(c, s) for s in self.source.names] for c in self.components
        ]

    def evaluate(self, point: Mapping[str, float]) -> dict[str, float]:
        return {
            n: ex.evaluate(c, point) for n, c in zip(self.target.names, self.components)
        }

    def substitution(self) -> dict[str, Expr]:
        return dict(zip(self.target.names, self.components))

    def image_in_domain(self, samples: int = 20, seed: int = 0, tol: float = 1e-9) -> bool:
        for pt in sample_points(self.source, samples, seed):
            if not self.target.contains(self.evaluate(pt), tol=tol):
                return False
        return True


def _same_chart(a: DifferentialForm, b: DifferentialForm):
    if a.chart != b.chart:
        raise ChartMismatch("forms live on different charts")


def form_add(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    _same_chart(a, b)
    if a.degree != b.degree:
        raise ValueError("can only add forms of equal degree")
    out = dict(a.coeffs)
    for idx, c in b.coeffs.items():
        out[idx] = ex.add(out[idx], c) if idx in out else c
    return DifferentialForm(a.chart, a.degree, out)


def form_scale(e: Expr | float, a: DifferentialForm) -> DifferentialForm:
    e = e if isinstance(e, Expr) else ex.constant(e)
    return DifferentialForm(
        a.chart, a.degree, {idx: ex.mul(e, c) for idx, c in a.coeffs.items()}
    )


def form_neg(a: DifferentialForm) -> DifferentialForm:
    return DifferentialForm(a.chart, a.degree, {i: ex.neg(c) for i, c in a.coeffs.items()})


def form_sub(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    return form_add(a, form_neg(b))


def _merge_sign(I: tuple[int, ...], J: tuple[int, ...]):
    """Sign of sorting the concatenation I+J (None if indices overlap)."""
    if set(I) & set(J):
        return None, None
    sign = 1
    for i in I:
        sign *= (-1) ** sum(1 for j in J if j < i)
    return tuple(sorted(I + J)), sign


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    _same_chart(a, b)
    degree = a.degree + b.degree
    if degree > a.chart.dim:
        return zero_form(a.chart, degree)
    out: dict[tuple[int, ...], Expr] = {}
    for I, cI in a.coeffs.items():
        for J, cJ in b.coeffs.items():
            K, sign = _merge_sign(I, J)
            if K is None:
                continue
            term = ex.mul(cI, cJ)
            if sign < 0:
                term = ex.neg(term)
            out[K] = ex.add(out[K], term) if K in out else term
    return DifferentialForm(a.chart, degree, out)


def exterior_derivative(a: DifferentialForm) -> DifferentialForm:
    chart = a.chart
    out: dict[tuple[int, ...], Expr] = {}
    if a.degree >= chart.dim:
        return zero_form(chart, a.degree + 1)
    for I, c in a.coeffs.items():
        for k in range(chart.dim):
            if k in I:
                continue
            dc = ex.differentiate(c, chart.names[k])
            if _is_zero_expr(dc):
                continue
            pos = sum(1 for i in I if i < k)
            idx = tuple(sorted(I + (k,)))
            term = dc if pos % 2 == 0 else ex.neg(dc)
            out[idx] = ex.add(out[idx], term) if idx in out else term
    return DifferentialForm(chart, a.degree + 1, out)


def interior_product(X: VectorField, a: DifferentialForm) -> DifferentialForm:
    if X.chart != a.chart:
        raise ChartMismatch("vector field and form live on different charts")
    if a.degree < 1:
        raise ValueError("interior product needs a form of degree >= 1")
    out: dict[tuple[int, ...], Expr] = {}
    for I, c in a.coeffs.items():
        for pos, k in enumerate(I):
            J = I[:pos] + I[pos + 1:]
            term = ex.mul(X.components[k], c)
            if pos % 2 == 1:
                term = ex.neg(term)
            out[J] = ex.add(out[J], term) if J in out else term
    return DifferentialForm(a.chart, a.degree - 1, out)


def _small_det(M: list[list[float]]) -> float:
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = M[0][j] * _small_det(minor)
        total += term if j % 2 == 0 else -term
    return total


def evaluate_form(
    a: DifferentialForm,
    point: Mapping[str, float],
    vectors: Sequence[Sequence[float]] = (),
) -> float:
    """Value of the form at a point on an ordered tuple of tangent vectors."""
    if len(vectors) != a.degree:
        raise ValueError(f"degree {a.degree} form needs {a.degree} vectors")
    total = 0.0
    for I, c in a.coeffs.items():
        minor = [[float(vectors[col][i]) for col in range(a.degree)] for i in I]
        total += ex.evaluate(c, point) * _small_det(minor)
    return total


def pullback_form(u: ChartMap, a: DifferentialForm) -> DifferentialForm:
    """Pull back a form on u's target chart to its source chart."""
    if a.chart != u.target:
        raise ChartMismatch("form does not live on the map's target chart")
    src = u.source
    subs = u.substitution()
    if a.degree > src.dim:
        return zero_form(src, a.degree)
    jac = u.jacobian()  # jac[j][k] = d u^j / d s^k
    differentials = [
        DifferentialForm(src, 1, {(k,): jac[j][k] for k in range(src.dim)})
        for j in range(u.target.dim)
    ]
    out = zero_form(src, a.degree)
    for I, c in a.coeffs.items():
        term = function_form(src, ex.substitute(c, subs))
        for i in I:
            term = wedge(term, differentials[i])
        out = form_add(out, term)
    return out


# --- small symbolic matrix helpers (used by Hodge duals and frame inversions)

ExprMatrix = Sequence[Sequence[Expr]]


def mat_det(M: ExprMatrix) -> Expr:
    n = len(M)
    if n == 0:
        return ex.constant(1.0)
    if n == 1:
        return M[0][0]
    total = ex.constant(0.0)
    for j in range(n):
        minor = [list(row[:j]) + list(row[j + 1:]) for row in M[1:]]
        term = ex.mul(M[0][j], mat_det(minor))
        total = ex.add(total, term) if j % 2 == 0 else ex.sub(total, term)
    return total


def mat_inverse(M: ExprMatrix) -> tuple[list[list[Expr]], Expr]:
    """Adjugate inverse; returns (inverse, determinant)."""
    n = len(M)
    det = mat_det(M)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [
                [M[r][c] for c in range(n) if c != i]
                for r in range(n) if r != j
            ]
            cof = mat_det(minor)
            if (i + j) % 2 == 1:
                cof = ex.neg(cof)
            inv[i][j] = ex.div(cof, det)
    return inv, det


def mat_mul(A: ExprMatrix, B: ExprMatrix) -> list[list[Expr]]:
    n, k, m = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = ex.constant(0.0)
            for t in range(k):
                acc = ex.add(acc, ex.mul(A[i][t], B[t][j]))
            row.append(acc)
        out.append(row)
    return out


def _complement_sign(K: tuple[int, ...], J: tuple[int, ...]) -> int:
    perm = list(K) + list(J)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def hodge_star(a: DifferentialForm, g_chart: ExprMatrix) -> DifferentialForm:
    """Riemannian Hodge dual with respect to a positive-definite chart metric.

    Uses the volume form sqrt(det g) dx^1\\wedge...\\wedge dx^m; the metric must be
    positive definite on the chart for the square root to make sense.
    """
    chart = a.chart
    m = chart.dim
    p = a.degree
    if p > m:
        return zero_form(chart, 0)
    ginv, det = mat_inverse(g_chart)
    vol = ex.sqrt(det)
    out: dict[tuple[int, ...], Expr] = {}
    all_idx = list(range(m))
    for K in itertools.combinations(all_idx, p):
        J = tuple(i for i in all_idx if i not in K)
        sign = _complement_sign(K, J)
        acc = ex.constant(0.0)
        for I, c in a.coeffs.items():
            sub = [[ginv[k][i] for i in I] for k in K]
            acc = ex.add(acc, ex.mul(mat_det(sub), c))
        coeff = ex.mul(vol, acc)
        if sign < 0:
            coeff = ex.neg(coeff)
        if not _is_zero_expr(coeff):
            out[J] = ex.add(out[J], coeff) if J in out else coeff
    return DifferentialForm(chart, m - p, out)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    if X.chart != Y.chart:
        raise ChartMismatch("vector fields live on different charts")
    chart = X.chart
    comps = []
    for k in range(chart.dim):
        acc = ex.constant(0.0)
        for j in range(chart.dim):
            acc = ex.add(acc, ex.mul(X.components[j], ex.differentiate(Y.components[k], chart.names[j])))
            acc = ex.sub(acc, ex.mul(Y.components[j], ex.differentiate(X.components[k], chart.names[j])))
        comps.append(acc)
    return VectorField(chart, tuple(comps))


def max_abs_on(a: DifferentialForm, points: Sequence[Mapping[str, float]]) -> float:
    """Largest absolute coefficient value over sample points."""
    worst = 0.0
    for c in a.coeffs.values():
        for pt in points:
            worst = max(worst, abs(ex.evaluate(c, pt)))
    return worst
