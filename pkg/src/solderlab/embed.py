"""Adapted frames for injective solder forms and the induced embedding
data: second fundamental form, normal connection, ambient product metric,
and the Levi-Civita cross-checks between them.

The frame keeps phi's image as the first block of columns (so the
transformed solder form is exactly the coordinate coframe) and completes
it with fiber-metric-orthonormal normal sections.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bundle as bd
from . import expr as ex
from . import forms as fm
from . import puzzle as pz
from . import riemann as rm
from .bundle import BundleValuedForm, ConnectionForms
from .expr import Expr
from .forms import Chart, DifferentialForm
from .puzzle import Puzzle

__all__ = [
    "AdaptedFrame",
    "adapted_frame",
    "extract_second_fundamental",
    "extract_normal_connection",
    "build_ambient_metric",
    "levi_civita_forms",
    "split_residual",
    "verify_embedding",
]


@dataclass(frozen=True)
class AdaptedFrame:
    """Frame change P whose first columns are phi's coordinate images.

    ``omega`` and ``metric`` are the connection and fiber metric rewritten
    in the new frame; the solder form itself becomes (dx^1 .. dx^m, 0 .. 0)
    exactly, so it is not stored.
    """

    puzzle: Puzzle
    matrix: tuple[tuple[Expr, ...], ...]
    inverse: tuple[tuple[Expr, ...], ...]
    omega: ConnectionForms
    metric: tuple[tuple[Expr, ...], ...]

    @property
    def normal_count(self) -> int:
        return self.puzzle.rank - self.puzzle.chart.dim

    def solder_components(self) -> BundleValuedForm:
        chart = self.puzzle.chart
        comps = [fm.coordinate_differential(chart, a) for a in range(chart.dim)]
        comps += [fm.zero_form(chart, 1) for _ in range(self.normal_count)]
        return BundleValuedForm(chart, self.puzzle.rank, 1, tuple(comps))


def _as_expr(v) -> Expr:
    return v if isinstance(v, Expr) else ex.constant(float(v))


def _fiber_metric_entries(puzzle: Puzzle):
    n = puzzle.rank
    if puzzle.fiber_metric is None:
        return [
            [ex.constant(1.0 if i == j else 0.0) for j in range(n)] for i in range(n)
        ]
    return [list(row) for row in puzzle.fiber_metric.entries]


def _inner(g, u, v) -> Expr:
    acc = ex.constant(0.0)
    for i in range(len(u)):
        for j in range(len(v)):
            acc = ex.add(acc, ex.mul(g[i][j], ex.mul(u[i], v[j])))
    return acc


def _default_completion(puzzle: Puzzle, tangent_cols, count: int):
    """Greedy coordinate fill-in, checked for invertibility on samples."""
    n = puzzle.rank
    pts = [puzzle.chart.center()] + list(fm.sample_points(puzzle.chart, 25, seed=17))
    tangent_vals = [
        np.array([[ex.evaluate(tangent_cols[a][i], pt) for a in range(len(tangent_cols))]
                  for i in range(n)])
        for pt in pts
    ]
    chosen = []
    chosen_vals = [np.zeros((n, 0)) for _ in pts]
    for cand in range(n):
        if len(chosen) == count:
            break
        col = np.zeros(n)
        col[cand] = 1.0
        ok = True
        for k, pt in enumerate(pts):
            trial = np.hstack([tangent_vals[k], chosen_vals[k], col[:, None]])
            s = np.linalg.svd(trial, compute_uv=False)
            if s[-1] <= 1e-8 * s[0]:
                ok = False
                break
        if ok:
            chosen.append(
                tuple(ex.constant(1.0 if i == cand else 0.0) for i in range(n))
            )
            chosen_vals = [
                np.hstack([cv, col[:, None]]) for cv in chosen_vals
            ]
    if len(chosen) != count:
        raise ValueError(
            "could not complete the frame from coordinate directions; "
            "pass an explicit completion"
        )
    return chosen


def adapted_frame(puzzle: Puzzle, completion: Optional[Sequence[Sequence]] = None) -> AdaptedFrame:
    """Build the adapted frame for an injective degree-1 solder form.

    The first m frame sections are e_a = phi(d/dx^a), kept un-normalized;
    the remaining n - m are Gram-Schmidt orthonormalizations (against both
    the tangent image and each other, in the fiber metric) of the supplied
    completion sections, or of greedily chosen coordinate directions.
    """
    if puzzle.degree != 1:
        raise ValueError("adapted frames need a degree-1 solder form")
    profile = pz.rank_profile(puzzle)
    if profile.classification not in ("injective", "isomorphism"):
        raise ValueError(
            f"adapted frames need an injective solder form, got {profile.classification}"
        )
    chart = puzzle.chart
    m = chart.dim
    n = puzzle.rank
    g = _fiber_metric_entries(puzzle)

    tangent_cols = [
        [puzzle.phi.component(i).coefficient((a,)) for i in range(n)] for a in range(m)
    ]
    if completion is None:
        raw_normals = _default_completion(puzzle, tangent_cols, n - m)
    else:
        if len(completion) != n - m:
            raise ValueError(f"completion must supply {n - m} sections")
        raw_normals = [tuple(_as_expr(v) for v in sec) for sec in completion]
        for sec in raw_normals:
            if len(sec) != n:
                raise ValueError("each completion section needs one entry per fiber dimension")

    induced = pz.induced_metric(puzzle)
    ind_inv, _ = fm.mat_inverse(induced)
    normals = []
    for w in raw_normals:
        u = list(w)
        # subtract the tangent-span projection (solved through the induced metric)
        rhs = [_inner(g, tangent_cols[a], w) for a in range(m)]
        for a in range(m):
            coef = ex.constant(0.0)
            for b in range(m):
                coef = ex.add(coef, ex.mul(ind_inv[a][b], rhs[b]))
            for i in range(n):
                u[i] = ex.sub(u[i], ex.mul(coef, tangent_cols[a][i]))
        for prev in normals:
            coef = _inner(g, prev, u)
            for i in range(n):
                u[i] = ex.sub(u[i], ex.mul(coef, prev[i]))
        length_sq = _inner(g, u, u)
        for pt in [chart.center()] + list(fm.sample_points(chart, 10, seed=19)):
            if ex.evaluate(length_sq, pt) < 1e-12:
                raise ValueError(
                    "completion section is linearly dependent on the frame "
                    "somewhere on the chart"
                )
        norm = ex.sqrt(length_sq)
        normals.append([ex.div(ui, norm) for ui in u])

    cols = tangent_cols + normals
    P = [[cols[j][i] for j in range(n)] for i in range(n)]
    P_inv, det = fm.mat_inverse(P)
    for pt in [chart.center()] + list(fm.sample_points(chart, 10, seed=23)):
        if abs(ex.evaluate(det, pt)) < 1e-10:
            raise ValueError("adapted frame is singular on the chart; completion is inadequate")

    # omega-tilde = P^-1 dP + P^-1 omega P
    dP = [[fm.exterior_derivative(fm.function_form(chart, P[i][j])) for j in range(n)]
          for i in range(n)]
    omega_entries = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = fm.zero_form(chart, 1)
            for k in range(n):
                acc = fm.form_add(acc, fm.form_scale(P_inv[i][k], dP[k][j]))
                for l in range(n):
                    acc = fm.form_add(
                        acc,
                        fm.form_scale(ex.mul(P_inv[i][k], P[l][j]), puzzle.omega.entry(k, l)),
                    )
            row.append(acc)
        omega_entries.append(tuple(row))

    gt = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            gt[i][j] = _inner(g, cols[i], cols[j])

    return AdaptedFrame(
        puzzle,
        tuple(tuple(row) for row in P),
        tuple(tuple(row) for row in P_inv),
        ConnectionForms(chart, n, tuple(omega_entries)),
        tuple(tuple(row) for row in gt),
    )


def extract_second_fundamental(frame: AdaptedFrame) -> list[list[list[Expr]]]:
    """h[mu][a][b]: the dx^b coefficient of omega-tilde^(m+mu)_a."""
    m = frame.puzzle.chart.dim
    return [
        [
            [frame.omega.entry(m + mu, a).coefficient((b,)) for b in range(m)]
            for a in range(m)
        ]
        for mu in range(frame.normal_count)
    ]


def extract_normal_connection(frame: AdaptedFrame) -> list[list[list[Expr]]]:
    """A[mu][a][nu]: the dx^a coefficient of omega-tilde^(m+mu)_(m+nu)."""
    m = frame.puzzle.chart.dim
    k = frame.normal_count
    return [
        [
            [frame.omega.entry(m + mu, m + nu).coefficient((a,)) for nu in range(k)]
            for a in range(m)
        ]
        for mu in range(k)
    ]


def split_residual(frame: AdaptedFrame) -> tuple[list[DifferentialForm], list[DifferentialForm]]:
    """The structure-equation residual separated into tangential and normal
    parts in the adapted frame (both vanish iff the puzzle is closed)."""
    chart = frame.puzzle.chart
    m = chart.dim
    solder = frame.solder_components()
    resid = bd.covariant_exterior_derivative(solder, frame.omega)
    tangential = [resid.component(a) for a in range(m)]
    normal = [resid.component(m + mu) for mu in range(frame.normal_count)]
    return tangential, normal


def _normal_names(base: tuple[str, ...], count: int) -> list[str]:
    names = []
    for idx in range(1, count + 1):
        nm = f"t{idx}"
        while nm in base or nm in names:
            nm += "_"
        names.append(nm)
    return names


def build_ambient_metric(
    frame: AdaptedFrame,
    normal_extent: float = 0.05,
    shape: Optional[Sequence[Sequence[Sequence]]] = None,
    ensure_positive: bool = True,
) -> tuple[Chart, list[list[Expr]]]:
    """Product-chart metric matching the frame data to first order in t.

    Blocks: G_ab = g_ab - 2 t^mu h_mu_ab, G_a_mu = t^nu (A^mu_a_nu +
    g_ab S^b_mu_nu), G_mu_nu = delta.  ``shape`` optionally supplies the
    symmetric tensor S (defaults to zero).  With ``ensure_positive`` the
    normal extent is halved until sampled positive-definiteness holds.
    """
    puzzle = frame.puzzle
    chart = puzzle.chart
    m = chart.dim
    k = frame.normal_count
    h = extract_second_fundamental(frame)
    A = extract_normal_connection(frame)
    g_ind = [[frame.metric[a][b] for b in range(m)] for a in range(m)]

    names = _normal_names(chart.names, k)
    tvars = [ex.variable(nm) for nm in names]

    def entry_ab(a, b):
        acc = g_ind[a][b]
        for mu in range(k):
            acc = ex.sub(acc, ex.mul(ex.constant(2.0), ex.mul(tvars[mu], h[mu][a][b])))
        return acc

    def entry_a_mu(a, mu):
        acc = ex.constant(0.0)
        for nu in range(k):
            term = A[mu][a][nu]
            if shape is not None:
                for b in range(m):
                    term = ex.add(term, ex.mul(g_ind[a][b], _as_expr(shape[b][mu][nu])))
            acc = ex.add(acc, ex.mul(tvars[nu], term))
        return acc

    extent = normal_extent
    for _attempt in range(9):
        box = tuple(chart.box) + tuple((-extent, extent) for _ in range(k))
        prod_chart = Chart(tuple(chart.names) + tuple(names), box)
        G = [[None] * (m + k) for _ in range(m + k)]
        for a in range(m):
            for b in range(m):
                G[a][b] = entry_ab(a, b)
        for a in range(m):
            for mu in range(k):
                e = entry_a_mu(a, mu)
                G[a][m + mu] = e
                G[m + mu][a] = e
        for mu in range(k):
            for nu in range(k):
                G[m + mu][m + nu] = ex.constant(1.0 if mu == nu else 0.0)
        if not ensure_positive or k == 0:
            return prod_chart, G
        ok = True
        for pt in fm.sample_points(prod_chart, 40, seed=29):
            mat = np.array([[ex.evaluate(G[i][j], pt) for j in range(m + k)]
                            for i in range(m + k)])
            if np.min(np.linalg.eigvalsh(mat)) <= 0.0:
                ok = False
                break
        if ok:
            return prod_chart, G
        extent *= 0.5
    raise ValueError("could not find a normal extent keeping the ambient metric positive")


def levi_civita_forms(g: Sequence[Sequence[Expr]], chart: Chart) -> ConnectionForms:
    """Connection forms of the coordinate frame: omega^i_j = Gamma^i_{kj} dx^k."""
    m = chart.dim
    gamma = rm.christoffel_symbols(g, chart)
    entries = []
    for i in range(m):
        row = []
        for j in range(m):
            coeffs = {(kk,): gamma[i][kk][j] for kk in range(m)}
            row.append(DifferentialForm(chart, 1, coeffs))
        entries.append(tuple(row))
    return ConnectionForms(chart, m, tuple(entries))


def verify_embedding(
    frame: AdaptedFrame,
    samples: int = 15,
    seed: int = 0,
    normal_extent: float = 0.05,
    shape: Optional[Sequence[Sequence[Sequence]]] = None,
) -> dict[str, float]:
    """Compare ambient Levi-Civita data at t = 0 with the frame data.

    Returned residuals (all maxima over sampled base points):
      frame_connection  Gamma^i_{a j} vs the dx^a coefficient of omega-tilde^i_j
      shape_operator    Gamma^a_{mu b} vs -g^{ac} h_mu_bc
      normal_shift      Gamma^a_{mu nu} vs the supplied S (zero by default)
      normal_torsion    Gamma^mu_{nu rho} vs 0
    """
    puzzle = frame.puzzle
    chart = puzzle.chart
    m = chart.dim
    k = frame.normal_count
    prod_chart, G = build_ambient_metric(
        frame, normal_extent=normal_extent, shape=shape, ensure_positive=False
    )
    gamma = rm.christoffel_symbols(G, prod_chart)
    h = extract_second_fundamental(frame)
    g_ind = [[frame.metric[a][b] for b in range(m)] for a in range(m)]
    g_inv, _ = fm.mat_inverse(g_ind)
    tnames = prod_chart.names[m:]

    out = {"frame_connection": 0.0, "shape_operator": 0.0,
           "normal_shift": 0.0, "normal_torsion": 0.0}
    for pt in fm.sample_points(chart, samples, seed=seed):
        full = dict(pt)
        for nm in tnames:
            full[nm] = 0.0
        for i in range(m + k):
            for j in range(m + k):
                for a in range(m):
                    lhs = ex.evaluate(gamma[i][a][j], full)
                    rhs = ex.evaluate(frame.omega.entry(i, j).coefficient((a,)), pt)
                    out["frame_connection"] = max(out["frame_connection"], abs(lhs - rhs))
        for a in range(m):
            for mu in range(k):
                for b in range(m):
                    lhs = ex.evaluate(gamma[a][m + mu][b], full)
                    rhs = 0.0
                    for c in range(m):
                        rhs -= ex.evaluate(g_inv[a][c], pt) * ex.evaluate(h[mu][b][c], pt)
                    out["shape_operator"] = max(out["shape_operator"], abs(lhs - rhs))
        for a in range(m):
            for mu in range(k):
                for nu in range(k):
                    lhs = ex.evaluate(gamma[a][m + mu][m + nu], full)
                    rhs = 0.0
                    if shape is not None:
                        rhs = float(ex.evaluate(_as_expr(shape[a][mu][nu]), pt))
                    out["normal_shift"] = max(out["normal_shift"], abs(lhs - rhs))
        for mu in range(k):
            for nu in range(k):
                for rho in range(k):
                    lhs = ex.evaluate(gamma[m + mu][m + nu][m + rho], full)
                    out["normal_torsion"] = max(out["normal_torsion"], abs(lhs))
    return out
