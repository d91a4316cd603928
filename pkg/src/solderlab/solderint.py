"""Transport consequences of integrability: the two-parameter identity for
surface families, transport tables predicted from the structure equation,
leaf tracing along the kernel distribution, and leaf-space quotients built
by flowing chart points onto a transversal slice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import bundle as bd
from . import expr as ex
from . import forms as fm
from . import puzzle as pz
from .bundle import ConnectionForms, FiberMetric
from .expr import Expr
from .forms import Chart, ChartMap, DifferentialForm
from .puzzle import Puzzle

__all__ = [
    "SurfaceFamily",
    "identity_residual",
    "residual_by_pullback",
    "TransportTable",
    "integrate_transport_system",
    "LeafTrace",
    "leaf_flow",
    "parallel_frame_residual",
    "QuotientPuzzle",
    "ProjectionResult",
    "build_quotient",
    "verify_quotient",
]


@dataclass(frozen=True)
class SurfaceFamily:
    """Two-parameter family of chart points gamma(t, s).

    ``components`` are expressions in the parameter variables; the t-slices
    are thought of as a family of curves indexed by s (and vice versa).
    """

    chart: Chart
    components: tuple[Expr, ...]
    t_range: tuple[float, float]
    s_range: tuple[float, float]
    t_var: str = "t"
    s_var: str = "s"

    def __post_init__(self):
        if len(self.components) != self.chart.dim:
            raise ValueError("family needs one component per chart coordinate")
        if self.t_var == self.s_var:
            raise ValueError("parameter names must differ")
        for c in self.components:
            extra = ex.free_variables(c) - {self.t_var, self.s_var}
            if extra:
                raise ValueError(f"family components use unknown variables {sorted(extra)}")
        if not (self.t_range[0] < self.t_range[1] and self.s_range[0] < self.s_range[1]):
            raise ValueError("parameter ranges must be nondegenerate")

    def parameter_chart(self) -> Chart:
        return Chart((self.t_var, self.s_var), (self.t_range, self.s_range))

    def chart_map(self) -> ChartMap:
        return ChartMap(self.parameter_chart(), self.chart, self.components)


def _pulled_back_data(puzzle: Puzzle, family: SurfaceFamily):
    """Coefficients of the pulled-back solder form and connection.

    Returns (A, B, Wt, Ws): A_i = (gamma* phi^i)(d/dt), B_i the d/ds
    coefficient, and the corresponding connection coefficient matrices.
    """
    if puzzle.degree != 1:
        raise ValueError("surface-family transport needs a degree-1 solder form")
    gamma = family.chart_map()
    n = puzzle.rank
    A, B = [], []
    for i in range(n):
        pulled = fm.pullback_form(gamma, puzzle.phi.component(i))
        A.append(pulled.coefficient((0,)))
        B.append(pulled.coefficient((1,)))
    Wt = [[None] * n for _ in range(n)]
    Ws = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            pulled = fm.pullback_form(gamma, puzzle.omega.entry(i, j))
            Wt[i][j] = pulled.coefficient((0,))
            Ws[i][j] = pulled.coefficient((1,))
    return A, B, Wt, Ws


def identity_residual(puzzle: Puzzle, family: SurfaceFamily) -> list[Expr]:
    """Mixed-partial route to (d^nabla phi)(d gamma/dt, d gamma/ds).

    Computed entirely from transport data along the family: for each fiber
    index, d/dt of the s-pairing minus d/ds of the t-pairing plus the
    connection cross terms.  Vanishes identically iff the pulled-back
    puzzle is closed over the parameter rectangle.
    """
    A, B, Wt, Ws = _pulled_back_data(puzzle, family)
    n = puzzle.rank
    out = []
    for i in range(n):
        acc = ex.sub(
            ex.differentiate(B[i], family.t_var),
            ex.differentiate(A[i], family.s_var),
        )
        for j in range(n):
            acc = ex.add(acc, ex.mul(Wt[i][j], B[j]))
            acc = ex.sub(acc, ex.mul(Ws[i][j], A[j]))
        out.append(acc)
    return out


def residual_by_pullback(puzzle: Puzzle, family: SurfaceFamily) -> list[Expr]:
    """Independent route: pull d^nabla phi back through the family map and
    read off the dt wedge ds coefficient."""
    resid = pz.integrability_residual(puzzle)
    gamma = family.chart_map()
    return [
        fm.pullback_form(gamma, resid.component(i)).coefficient((0, 1))
        for i in range(puzzle.rank)
    ]


# ------------------------------------------------------- transport tables


@dataclass(frozen=True)
class TransportTable:
    """Predicted vs directly evaluated t-pairings over a parameter grid.

    ``predicted[k, l, i]`` integrates the structure-equation ODE in s from
    s = 0; ``direct[k, l, i]`` evaluates phi(d gamma/dt) at the same node.
    """

    t_values: np.ndarray
    s_values: np.ndarray
    predicted: np.ndarray
    direct: np.ndarray

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.predicted - self.direct)))


def _rk4_linear_column(mats, srcs, h):
    """One RK4 step for v' = M(s) v + S(s) given stage data.

    ``mats``/``srcs`` hold (M, S) at s, s + h/2, s + h.
    """
    def rhs(stage, v):
        M, S = mats[stage], srcs[stage]
        return M @ v + S

    def step(v):
        k1 = rhs(0, v)
        k2 = rhs(1, v + 0.5 * h * k1)
        k3 = rhs(1, v + 0.5 * h * k2)
        k4 = rhs(2, v + h * k3)
        return v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return step


def integrate_transport_system(
    puzzle: Puzzle,
    family: SurfaceFamily,
    t_samples: int = 9,
    s_steps: int = 200,
) -> TransportTable:
    """Integrate d A_i/ds = -Ws A + (d B/dt + Wt B) from s = 0 outward.

    The s-range must contain 0 (the anchoring curve).  When the puzzle is
    integrable the predicted table reproduces the direct evaluation of
    phi(d gamma/dt) up to the RK4 truncation error.
    """
    s_lo, s_hi = family.s_range
    if not (s_lo <= 0.0 <= s_hi):
        raise ValueError("s-range must contain 0 to anchor the transport system")
    A, B, Wt, Ws = _pulled_back_data(puzzle, family)
    n = puzzle.rank
    source = []
    for i in range(n):
        acc = ex.differentiate(B[i], family.t_var)
        for j in range(n):
            acc = ex.add(acc, ex.mul(Wt[i][j], B[j]))
        source.append(acc)

    up_steps = max(1, round(s_steps * s_hi / (s_hi - s_lo))) if s_hi > 0 else 0
    dn_steps = max(1, round(s_steps * (-s_lo) / (s_hi - s_lo))) if s_lo < 0 else 0
    s_up = np.linspace(0.0, s_hi, up_steps + 1) if up_steps else np.array([0.0])
    s_dn = np.linspace(0.0, s_lo, dn_steps + 1) if dn_steps else np.array([0.0])
    s_values = np.unique(np.concatenate([s_dn[::-1], s_up]))
    zero_idx = int(np.argmin(np.abs(s_values)))

    t_values = np.linspace(family.t_range[0], family.t_range[1], t_samples)
    predicted = np.zeros((t_samples, s_values.size, n))
    direct = np.zeros((t_samples, s_values.size, n))

    def eval_grid(e: Expr, tval: float, sgrid: np.ndarray) -> np.ndarray:
        return ex.evaluate_many(
            e, {family.t_var: np.full(sgrid.shape, tval), family.s_var: sgrid}
        )

    for k, tval in enumerate(t_values):
        for i in range(n):
            direct[k, :, i] = eval_grid(A[i], tval, s_values)
        v0 = direct[k, zero_idx].copy()
        predicted[k, zero_idx] = v0
        for direction, nodes in ((1, s_values[zero_idx:]), (-1, s_values[: zero_idx + 1][::-1])):
            if nodes.size < 2:
                continue
            # stage grid: nodes plus midpoints
            mids = 0.5 * (nodes[:-1] + nodes[1:])
            allpts = np.concatenate([nodes, mids])
            Mvals = np.empty((n, n, allpts.size))
            Svals = np.empty((n, allpts.size))
            for i in range(n):
                Svals[i] = eval_grid(source[i], tval, allpts)
                for j in range(n):
                    Mvals[i, j] = -eval_grid(Ws[i][j], tval, allpts)
            v = v0.copy()
            for step in range(nodes.size - 1):
                h = nodes[step + 1] - nodes[step]
                stages = [step, nodes.size + step, step + 1]
                mats = [Mvals[:, :, idx] for idx in stages]
                srcs = [Svals[:, idx] for idx in stages]
                v = _rk4_linear_column(mats, srcs, h)(v)
                idx_out = zero_idx + direction * (step + 1)
                predicted[k, idx_out] = v
    return TransportTable(t_values, s_values, predicted, direct)


# ------------------------------------------------------------- leaf flows


@dataclass(frozen=True)
class LeafTrace:
    """Numerically traced leaf curve: points, unit velocities, and the
    largest solder-form pairing seen along the discrete velocity field."""

    chart_names: tuple[str, ...]
    points: np.ndarray
    velocities: np.ndarray
    max_pairing: float

    def point(self, idx: int) -> dict[str, float]:
        return dict(zip(self.chart_names, self.points[idx]))


def _kernel_unit(puzzle: Puzzle, point: Mapping[str, float], ref: np.ndarray) -> np.ndarray:
    mat = pz._contraction_matrix(puzzle, point)
    u, s, vt = np.linalg.svd(mat)
    sigma_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > 1e-9 * sigma_max)) if sigma_max > 0 else 0
    null_dim = mat.shape[1] - rank
    if null_dim != 1:
        raise ValueError(
            f"kernel dimension is {null_dim} at {dict(point)}; leaf tracing "
            "needs a one-dimensional kernel"
        )
    v = vt[-1]
    if float(np.dot(v, ref)) < 0.0:
        v = -v
    return v


def leaf_flow(
    puzzle: Puzzle,
    start: Mapping[str, float],
    length: float,
    steps: int = 400,
    orient: Optional[Sequence[float]] = None,
) -> LeafTrace:
    """Trace the unit-speed kernel flow from a start point.

    ``orient`` fixes the initial direction (the kernel line has no
    preferred sign); afterwards the sign is carried along continuously.
    """
    names = puzzle.chart.names
    m = puzzle.chart.dim
    x = np.array([float(start[nm]) for nm in names])
    if orient is None:
        ref = np.zeros(m)
        ref[0] = 1.0
        first = _kernel_unit(puzzle, dict(zip(names, x)), ref)
        if abs(float(np.dot(first, ref))) < 1e-12:
            nz = int(np.argmax(np.abs(first)))
            ref = np.zeros(m)
            ref[nz] = 1.0
    else:
        ref = np.asarray(orient, dtype=float)
    h = length / steps
    points = np.zeros((steps + 1, m))
    velocities = np.zeros((steps + 1, m))
    points[0] = x
    max_pairing = 0.0
    for k in range(steps + 1):
        pt = dict(zip(names, points[k]))
        v = _kernel_unit(puzzle, pt, ref)
        velocities[k] = v
        mat = pz._contraction_matrix(puzzle, pt)
        pairing = float(np.max(np.abs(mat @ v))) if mat.size else 0.0
        max_pairing = max(max_pairing, pairing)
        ref = v
        if k == steps:
            break
        k1 = v
        k2 = _kernel_unit(puzzle, dict(zip(names, points[k] + 0.5 * h * k1)), ref)
        k3 = _kernel_unit(puzzle, dict(zip(names, points[k] + 0.5 * h * k2)), ref)
        k4 = _kernel_unit(puzzle, dict(zip(names, points[k] + h * k3)), ref)
        points[k + 1] = points[k] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return LeafTrace(names, points, velocities, max_pairing)


def parallel_frame_residual(
    puzzle: Puzzle,
    family: SurfaceFamily,
    t_samples: int = 7,
    steps: int = 300,
) -> float:
    """Check that phi(d gamma/dt) is parallel along in-leaf s-curves.

    For families whose s-curves lie in leaves the transport system is
    homogeneous, so the direct pairing must equal the parallel transport
    of its s = 0 value.  Returns the largest deviation over a (t, s) grid;
    warns when the s-curves are not actually in-leaf.
    """
    if family.s_range[0] != 0.0:
        raise ValueError("parallel-frame check expects the s-range to start at 0")
    A, B, _Wt, _Ws = _pulled_back_data(puzzle, family)
    n = puzzle.rank
    pchart = family.parameter_chart()
    b_bundle = bd.BundleValuedForm(
        pchart, n, 0, tuple(fm.function_form(pchart, b) for b in B)
    )
    probe = fm.sample_points(pchart, 25, seed=13)
    if b_bundle.max_abs_on(probe) > 1e-8:
        warnings.warn("s-curves are not in-leaf; the pairing need not be parallel",
                      stacklevel=2)
    worst = 0.0
    s_chart = Chart((family.s_var,), (family.s_range,))
    for tval in np.linspace(family.t_range[0], family.t_range[1], t_samples):
        subs = {family.t_var: ex.constant(tval)}
        curve = ChartMap(
            s_chart, puzzle.chart,
            tuple(ex.substitute(c, subs) for c in family.components),
        )
        a_here = [ex.substitute(a, subs) for a in A]
        v0 = np.array([ex.evaluate(a, {family.s_var: 0.0}) for a in a_here])
        nodes, transported = bd.parallel_transport(puzzle.omega, curve, v0, steps=steps)
        direct = np.stack(
            [ex.evaluate_many(a, {family.s_var: nodes}) for a in a_here], axis=1
        )
        worst = max(worst, float(np.max(np.abs(transported - direct))))
    return worst


# ------------------------------------------------------------- quotients


@dataclass(frozen=True)
class ProjectionResult:
    slice_point: dict[str, float]
    transport: np.ndarray
    flow_time: float


@dataclass(frozen=True)
class QuotientPuzzle:
    """Leaf-space model: the parent puzzle restricted to a transversal slice
    plus the flow machinery that projects chart points onto it."""

    parent: Puzzle
    quotient: Puzzle
    slice_coord: str
    slice_value: float
    flow_step: float = 0.02

    def project(self, point: Mapping[str, float], max_time: float = 50.0) -> ProjectionResult:
        return _project_to_slice(
            self.parent, self.slice_coord, self.slice_value, point,
            step=self.flow_step, max_time=max_time,
        )


def _omega_matrix_at(puzzle: Puzzle, point: Mapping[str, float], direction: np.ndarray) -> np.ndarray:
    n = puzzle.rank
    m = puzzle.chart.dim
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            entry = puzzle.omega.entry(i, j)
            acc = 0.0
            for a in range(m):
                c = entry.coeffs.get((a,))
                if c is not None:
                    acc += ex.evaluate(c, point) * direction[a]
            out[i, j] = acc
    return out


def _project_to_slice(
    puzzle: Puzzle,
    slice_coord: str,
    slice_value: float,
    start: Mapping[str, float],
    step: float = 0.02,
    max_time: float = 50.0,
) -> ProjectionResult:
    names = puzzle.chart.names
    m = puzzle.chart.dim
    n = puzzle.rank
    c_idx = names.index(slice_coord)
    x = np.array([float(start[nm]) for nm in names])
    F = np.eye(n)

    def gap(xv: np.ndarray) -> float:
        return xv[c_idx] - slice_value

    if abs(gap(x)) <= 1e-12:
        return ProjectionResult(dict(zip(names, x)), F, 0.0)

    ref = np.zeros(m)
    ref[c_idx] = -np.sign(gap(x))
    u0 = _kernel_unit(puzzle, dict(zip(names, x)), ref)
    if abs(u0[c_idx]) < 1e-8:
        raise ValueError("kernel flow is tangent to the slice direction at the start point")
    ref = u0

    def rk4_step(xv: np.ndarray, Fv: np.ndarray, h: float, ref_vec: np.ndarray):
        def deriv(xs, Fs):
            pt = dict(zip(names, xs))
            u = _kernel_unit(puzzle, pt, ref_vec)
            return u, -_omega_matrix_at(puzzle, pt, u) @ Fs

        k1x, k1F = deriv(xv, Fv)
        k2x, k2F = deriv(xv + 0.5 * h * k1x, Fv + 0.5 * h * k1F)
        k3x, k3F = deriv(xv + 0.5 * h * k2x, Fv + 0.5 * h * k2F)
        k4x, k4F = deriv(xv + h * k3x, Fv + h * k3F)
        xn = xv + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        Fn = Fv + (h / 6.0) * (k1F + 2 * k2F + 2 * k3F + k4F)
        return xn, Fn, k1x

    t = 0.0
    while t < max_time:
        xn, Fn, u_here = rk4_step(x, F, step, ref)
        ref = u_here
        if gap(xn) == 0.0:
            return ProjectionResult(dict(zip(names, xn)), Fn, t + step)
        if np.sign(gap(xn)) != np.sign(gap(x)):
            lo, hi = 0.0, step
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                xm, Fm, _ = rk4_step(x, F, mid, ref)
                if abs(gap(xm)) <= 1e-10:
                    return ProjectionResult(dict(zip(names, xm)), Fm, t + mid)
                if np.sign(gap(xm)) != np.sign(gap(x)):
                    hi = mid
                else:
                    lo = mid
            xm, Fm, _ = rk4_step(x, F, 0.5 * (lo + hi), ref)
            return ProjectionResult(dict(zip(names, xm)), Fm, t + 0.5 * (lo + hi))
        x, F = xn, Fn
        t += step
    raise ValueError("kernel flow did not reach the slice within the time budget")


def build_quotient(
    puzzle: Puzzle,
    slice_coord: str,
    slice_value: float,
    flow_step: float = 0.02,
    name: str = "",
) -> QuotientPuzzle:
    """Model the leaf space of an integrable puzzle on a transversal slice.

    Requires a degree-1 solder form whose kernel is one-dimensional at
    every sampled point (higher-dimensional leaves would need a genuinely
    multi-directional flow, which this builder does not attempt).  The
    quotient data is the symbolic restriction of phi, omega, and the fiber
    metric to the slice; ``project`` supplies the numeric leaf projection.
    """
    if puzzle.degree != 1:
        raise ValueError("quotient construction needs a degree-1 solder form")
    if slice_coord not in puzzle.chart.names:
        raise ValueError(f"{slice_coord!r} is not a coordinate of the chart")
    lo, hi = puzzle.chart.box[puzzle.chart.names.index(slice_coord)]
    if not (lo <= slice_value <= hi):
        raise ValueError("slice value lies outside the chart box")
    profile = pz.rank_profile(puzzle)
    if profile.classification == "variable":
        raise ValueError("cannot build a quotient for a variable-rank solder form")
    if profile.kernel_dim == 0:
        raise ValueError("solder form has no kernel; nothing to quotient by")
    if profile.kernel_dim != 1:
        raise ValueError(
            f"kernel dimension {profile.kernel_dim} is not supported; "
            "only one-dimensional leaves can be flowed to a slice"
        )

    names = puzzle.chart.names
    c_idx = names.index(slice_coord)
    keep = [a for a in range(len(names)) if a != c_idx]
    slice_chart = Chart(
        tuple(names[a] for a in keep), tuple(puzzle.chart.box[a] for a in keep)
    )
    comps = []
    for a, nm in enumerate(names):
        if a == c_idx:
            comps.append(ex.constant(slice_value))
        else:
            comps.append(ex.variable(nm))
    inclusion = ChartMap(slice_chart, puzzle.chart, tuple(comps))
    quotient = pz.pullback_puzzle(puzzle, inclusion, name=name or f"{puzzle.name}-quotient")
    return QuotientPuzzle(puzzle, quotient, slice_coord, slice_value, flow_step)


def verify_quotient(
    qp: QuotientPuzzle,
    samples: int = 8,
    seed: int = 0,
    eps: float = 1e-5,
    margin: float = 0.1,
) -> dict[str, float]:
    """Numerically compare parent and quotient data through the projection.

    For sampled chart points and coordinate directions xi the transported
    pairing F phi_x(xi) must match phi-bar at the projected point applied
    to the differential of the projection (central differences); fiber
    metrics must agree through the transport.  Returns the worst errors.
    """
    parent = qp.parent
    names = parent.chart.names
    m = parent.chart.dim
    n = parent.rank
    qnames = qp.quotient.chart.names
    pts = fm.sample_points(parent.chart, samples, seed=seed, margin=margin)
    phi_err = 0.0
    metric_err = 0.0
    for pt in pts:
        base = qp.project(pt)
        q0 = base.slice_point
        # differential of the projection, one column per chart direction
        dQ = np.zeros((len(qnames), m))
        for a in range(m):
            hi = dict(pt)
            lo = dict(pt)
            hi[names[a]] += eps
            lo[names[a]] -= eps
            qhi = qp.project(hi).slice_point
            qlo = qp.project(lo).slice_point
            dQ[:, a] = [(qhi[nm] - qlo[nm]) / (2 * eps) for nm in qnames]
        phi_here = pz._contraction_matrix(parent, pt)
        phi_bar = pz._contraction_matrix(qp.quotient, q0)
        lhs = base.transport @ phi_here
        rhs = phi_bar @ dQ
        phi_err = max(phi_err, float(np.max(np.abs(lhs - rhs))))
        if parent.fiber_metric is not None and qp.quotient.fiber_metric is not None:
            g_here = parent.fiber_metric.matrix_at(pt)
            g_bar = qp.quotient.fiber_metric.matrix_at(q0)
            carried = base.transport.T @ g_bar @ base.transport
            metric_err = max(metric_err, float(np.max(np.abs(carried - g_here))))
    return {"phi": phi_err, "metric": metric_err}
