"""Dual-bundle sections paired against the solder form, and the question
of which chart functions arise that way.

A section f of the dual bundle pairs with the solder form to give the
p-form (f, phi) = f_i phi^i; f is an observable when d(f, phi) = 0.  For
a pointwise-invertible solder form every function alpha determines a
unique f with d alpha = (f, phi), and the obstruction for a general f is
the asymmetry of the Cartan coefficient table h_{ik}.  Injective and
surjective solder forms get an affine family (through an adapted frame)
and a leaf-constancy test respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import embed as em
from . import expr as ex
from . import forms as fm
from . import puzzle as pz
from .expr import Expr
from .forms import DifferentialForm
from .puzzle import Puzzle

__all__ = [
    "DualSection",
    "pairing_form",
    "observable_residual",
    "reconstruct_observable",
    "CartanReport",
    "cartan_coefficients",
    "SolvabilityResult",
    "classify_solvability",
]


@dataclass(frozen=True)
class DualSection:
    """Componentwise section of the dual bundle, in the implicit dual frame."""

    chart: fm.Chart
    rank: int
    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.components) != self.rank:
            raise ValueError("dual section needs one component per bundle rank")


def _check_section(puzzle: Puzzle, f: DualSection):
    if f.chart != puzzle.chart:
        raise fm.ChartMismatch("dual section lives on a different chart")
    if f.rank != puzzle.rank:
        raise ValueError("dual section rank does not match the bundle")


def pairing_form(puzzle: Puzzle, f: DualSection) -> DifferentialForm:
    """The p-form (f, phi) = f_i phi^i."""
    _check_section(puzzle, f)
    acc = fm.zero_form(puzzle.chart, puzzle.degree)
    for i in range(puzzle.rank):
        acc = fm.form_add(acc, fm.form_scale(f.components[i], puzzle.phi.component(i)))
    return acc


def observable_residual(puzzle: Puzzle, f: DualSection) -> DifferentialForm:
    """d(f, phi); the section is an observable exactly when this vanishes."""
    return fm.exterior_derivative(pairing_form(puzzle, f))


def _gradient(chart, alpha: Expr) -> list[Expr]:
    return [ex.differentiate(alpha, nm) for nm in chart.names]


def _require_square(puzzle: Puzzle, what: str):
    if puzzle.degree != 1 or puzzle.rank != puzzle.chart.dim:
        raise ValueError(f"{what} needs a degree-1 solder form with rank equal "
                         "to the chart dimension")


def _phi_matrix(puzzle: Puzzle):
    m = puzzle.chart.dim
    return [
        [puzzle.phi.component(i).coefficient((a,)) for a in range(m)]
        for i in range(puzzle.rank)
    ]


def reconstruct_observable(puzzle: Puzzle, alpha: Expr) -> DualSection:
    """The unique dual section with d alpha = (f, phi), for invertible phi.

    Solves f_i phi^i_a = d_a alpha by the closed-form (adjugate) inverse of
    the solder coefficient matrix; singularity surfaces on evaluation.
    """
    _require_square(puzzle, "observable reconstruction")
    m = puzzle.chart.dim
    phi_mat = _phi_matrix(puzzle)
    phi_t = [[phi_mat[i][a] for i in range(m)] for a in range(m)]
    inv_t, _det = fm.mat_inverse(phi_t)
    grad = _gradient(puzzle.chart, alpha)
    comps = []
    for i in range(m):
        acc = ex.constant(0.0)
        for a in range(m):
            acc = ex.add(acc, ex.mul(inv_t[i][a], grad[a]))
        comps.append(acc)
    return DualSection(puzzle.chart, puzzle.rank, tuple(comps))


@dataclass(frozen=True)
class CartanReport:
    """The coefficient table of df_i - f_j omega^j_i against the solder
    coframe, h_{ik} phi^k, with its sampled symmetry defect."""

    h: tuple[tuple[Expr, ...], ...]
    max_asymmetry: float

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return self.max_asymmetry <= tol


def cartan_coefficients(
    puzzle: Puzzle, f: DualSection, samples: int = 25, seed: int = 0
) -> CartanReport:
    """Expand the covariant differential of f in the solder coframe.

    For invertible phi the expansion df_i - f_j omega^j_i = h_{ik} phi^k
    always has a unique pointwise solution; f is an observable exactly
    when the table h is symmetric (for an integrable puzzle).
    """
    _check_section(puzzle, f)
    _require_square(puzzle, "the Cartan reduction")
    chart = puzzle.chart
    m = chart.dim
    L = []
    for i in range(m):
        li = fm.exterior_derivative(fm.function_form(chart, f.components[i]))
        for j in range(m):
            li = fm.form_sub(
                li, fm.form_scale(f.components[j], puzzle.omega.entry(j, i))
            )
        L.append([li.coefficient((a,)) for a in range(m)])
    inv_phi, _det = fm.mat_inverse(_phi_matrix(puzzle))
    h = fm.mat_mul(L, inv_phi)
    worst = 0.0
    pts = fm.sample_points(chart, samples, seed=seed)
    for i in range(m):
        for k in range(i + 1, m):
            gap = ex.sub(h[i][k], h[k][i])
            for p in pts:
                worst = max(worst, abs(ex.evaluate(gap, p)))
    return CartanReport(tuple(tuple(row) for row in h), worst)


@dataclass(frozen=True)
class SolvabilityResult:
    """Outcome of asking whether d alpha = (f, phi) has a solution.

    ``kind`` is one of "unique", "affine-family", "solvable",
    "unsolvable".  ``section`` holds original-frame components whenever a
    solution exists; for the affine family, ``adapted_components`` is the
    representative in the adapted frame (normal components zero) and
    ``annihilator_dim`` the dimension of the solution family.  An
    unsolvable alpha carries a witness: a sample point and kernel
    direction along which d alpha fails to vanish.
    """

    kind: str
    section: Optional[DualSection] = None
    annihilator_dim: int = 0
    adapted_components: Optional[tuple[Expr, ...]] = None
    witness_point: Optional[dict] = None
    witness_direction: Optional[tuple[float, ...]] = None
    witness_value: float = 0.0


def classify_solvability(
    puzzle: Puzzle,
    alpha: Expr,
    completion: Optional[Sequence[Sequence[Expr]]] = None,
    samples: int = 30,
    seed: int = 0,
    tol: float = 1e-8,
) -> SolvabilityResult:
    """Decide how d alpha = (f, phi) can be solved, by rank case.

    Invertible solder forms give a unique section; injective ones an
    affine family presented in an adapted frame (``completion`` is passed
    through to the frame construction); surjective ones require alpha to
    be constant on leaves, checked by pairing d alpha against sampled
    kernel directions.
    """
    if puzzle.degree != 1:
        raise ValueError("solvability classification needs a degree-1 solder form")
    profile = pz.rank_profile(puzzle)
    if profile.classification == "variable":
        raise ValueError("solvability classification needs constant rank")
    chart = puzzle.chart
    m = chart.dim
    n = puzzle.rank
    grad = _gradient(chart, alpha)

    if profile.classification == "isomorphism":
        return SolvabilityResult("unique", section=reconstruct_observable(puzzle, alpha))

    if profile.classification == "injective":
        frame = em.adapted_frame(puzzle, completion=completion)
        adapted = tuple(grad) + tuple(ex.constant(0.0) for _ in range(n - m))
        comps = []
        for i in range(n):
            acc = ex.constant(0.0)
            for a in range(m):
                acc = ex.add(acc, ex.mul(frame.inverse[a][i], grad[a]))
            comps.append(acc)
        return SolvabilityResult(
            "affine-family",
            section=DualSection(chart, n, tuple(comps)),
            annihilator_dim=n - m,
            adapted_components=adapted,
        )

    if profile.classification == "surjective":
        pts = [chart.center()] + list(fm.sample_points(chart, samples, seed=seed))
        for p in pts:
            kernel = pz.kernel_distribution(puzzle, p)
            grad_at_p = np.array([ex.evaluate(g, p) for g in grad])
            for row in kernel:
                pairing = float(np.dot(np.asarray(row, dtype=float), grad_at_p))
                if abs(pairing) > tol:
                    return SolvabilityResult(
                        "unsolvable",
                        witness_point=dict(p),
                        witness_direction=tuple(float(x) for x in row),
                        witness_value=pairing,
                    )
        phi_mat = _phi_matrix(puzzle)
        gram = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = ex.constant(0.0)
                for a in range(m):
                    acc = ex.add(acc, ex.mul(phi_mat[i][a], phi_mat[j][a]))
                gram[i][j] = acc
        gram_inv, _det = fm.mat_inverse(gram)
        rhs = []
        for i in range(n):
            acc = ex.constant(0.0)
            for a in range(m):
                acc = ex.add(acc, ex.mul(phi_mat[i][a], grad[a]))
            rhs.append(acc)
        comps = []
        for i in range(n):
            acc = ex.constant(0.0)
            for j in range(n):
                acc = ex.add(acc, ex.mul(gram_inv[i][j], rhs[j]))
            comps.append(acc)
        return SolvabilityResult(
            "solvable", section=DualSection(chart, n, tuple(comps))
        )

    raise ValueError(
        "only invertible, injective, or surjective solder forms are classified"
    )
