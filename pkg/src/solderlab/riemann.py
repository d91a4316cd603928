"""Levi-Civita pipeline on an expression metric: Christoffel symbols,
Ricci tensor, scalar curvature, Einstein tensor.

Index conventions: Gamma[i][j][k] = Gamma^i_{jk} (symmetric in j, k),
R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj} + Gamma^i_{km} Gamma^m_{lj}
- Gamma^i_{lm} Gamma^m_{kj}, Ricci_{jl} = R^k_{jkl}.  With this choice the
unit round sphere has positive scalar curvature.
"""

from __future__ import annotations

from . import expr as ex
from . import forms as fm
from .expr import Expr
from .forms import Chart

__all__ = [
    "christoffel_symbols",
    "ricci_tensor",
    "scalar_curvature",
    "einstein_tensor",
]


def christoffel_symbols(g: fm.ExprMatrix, chart: Chart) -> list[list[list[Expr]]]:
    m = chart.dim
    if len(g) != m or any(len(row) != m for row in g):
        raise ValueError("metric must be square of the chart dimension")
    ginv, _ = fm.mat_inverse(g)
    dg = [
        [[ex.differentiate(g[i][j], chart.names[k]) for k in range(m)] for j in range(m)]
        for i in range(m)
    ]
    gamma = [[[None] * m for _ in range(m)] for _ in range(m)]
    for i in range(m):
        for j in range(m):
            for k in range(j, m):
                acc = ex.constant(0.0)
                for l in range(m):
                    bracket = ex.sub(ex.add(dg[l][j][k], dg[l][k][j]), dg[j][k][l])
                    acc = ex.add(acc, ex.mul(ginv[i][l], bracket))
                val = ex.mul(ex.constant(0.5), acc)
                gamma[i][j][k] = val
                gamma[i][k][j] = val
    return gamma


def ricci_tensor(g: fm.ExprMatrix, chart: Chart) -> list[list[Expr]]:
    m = chart.dim
    gamma = christoffel_symbols(g, chart)
    names = chart.names
    ric = [[None] * m for _ in range(m)]
    for j in range(m):
        for l in range(j, m):
            acc = ex.constant(0.0)
            for k in range(m):
                acc = ex.add(acc, ex.differentiate(gamma[k][l][j], names[k]))
                acc = ex.sub(acc, ex.differentiate(gamma[k][k][j], names[l]))
                for mm in range(m):
                    acc = ex.add(acc, ex.mul(gamma[k][k][mm], gamma[mm][l][j]))
                    acc = ex.sub(acc, ex.mul(gamma[k][l][mm], gamma[mm][k][j]))
            ric[j][l] = acc
            ric[l][j] = acc
    return ric


def scalar_curvature(g: fm.ExprMatrix, chart: Chart) -> Expr:
    m = chart.dim
    ric = ricci_tensor(g, chart)
    ginv, _ = fm.mat_inverse(g)
    acc = ex.constant(0.0)
    for i in range(m):
        for j in range(m):
            acc = ex.add(acc, ex.mul(ginv[i][j], ric[i][j]))
    return acc


def einstein_tensor(g: fm.ExprMatrix, chart: Chart) -> list[list[Expr]]:
    m = chart.dim
    ric = ricci_tensor(g, chart)
    ginv, _ = fm.mat_inverse(g)
    scal = ex.constant(0.0)
    for i in range(m):
        for j in range(m):
            scal = ex.add(scal, ex.mul(ginv[i][j], ric[i][j]))
    half = ex.mul(ex.constant(0.5), scal)
    return [
        [ex.sub(ric[i][j], ex.mul(half, g[i][j])) for j in range(m)] for i in range(m)
    ]
