"""Command-line front end: declarative puzzle files, check dispatch, and
machine-readable reports.

Puzzle files are TOML documents with four core sections::

    [chart]        dim, coords, domain (per-coordinate [lo, hi])
    [bundle]       rank, optional metric (n x n expression strings)
    [connection]   omega.i.j = [m expression strings]   (1-based i, j)
    [solder]       degree, plus tables phi.i mapping multi-index keys
                   "a" / "a,b" (0-based, strictly increasing) to expressions

Two optional sections extend this: ``[chart_metric]`` carries a base metric
(rows of expression strings) for the gauge-field residual, and ``[meta]``
names the puzzle and lists which commands ``report-all`` should run on it,
with ``expect_fail`` marking deliberate negative controls.

Reports are JSON with sorted keys; timing fields are zeroed unless
``--timing`` is passed so that repeated runs are byte-identical.  Exit
status: 0 all checks passed, 1 a check failed, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from . import bundle as bd
from . import embed as em
from . import expr as ex
from . import forms as fm
from . import observables as ob
from . import palatini as pl
from . import puzzle as pz
from . import solderint as si
from .bundle import BundleValuedForm, ConnectionForms, FiberMetric
from .forms import Chart, DifferentialForm
from .puzzle import Puzzle

__all__ = ["PuzzleFileError", "LoadedPuzzle", "load_puzzle", "run_command", "main"]

COMMANDS = (
    "check",
    "classify",
    "metric",
    "embed",
    "quotient",
    "transport",
    "palatini",
    "yangmills",
    "observable",
)


class PuzzleFileError(ValueError):
    """A puzzle file that cannot be turned into a valid puzzle."""


@dataclass(frozen=True)
class LoadedPuzzle:
    puzzle: Puzzle
    chart_metric: Optional[list]
    meta: dict
    label: str


def _fail(label: str, message: str):
    raise PuzzleFileError(f"{label}: {message}")


def _parse(text, names, key: str, label: str) -> ex.Expr:
    if not isinstance(text, str):
        _fail(label, f"expected an expression string at {key}")
    try:
        return ex.parse_expr(text, names)
    except Exception as err:
        _fail(label, f"could not parse expression at {key}: {err}")


def _dotted_entries(section: dict, prefix: str, depth: int, label: str):
    """Normalize 'prefix.i[.j]' keys, whether written flat or as nested
    TOML tables, into {(i, ...): value}."""
    out = {}

    def walk(node, parts):
        if len(parts) == depth:
            try:
                idx = tuple(int(p) for p in parts)
            except ValueError:
                _fail(label, f"non-integer index in key {prefix}.{'.'.join(parts)}")
            out[idx] = node
            return
        if not isinstance(node, dict):
            _fail(label, f"malformed {prefix} entry {prefix}.{'.'.join(parts)}")
        for k, v in node.items():
            walk(v, parts + [str(k)])

    for key, value in section.items():
        parts = key.split(".")
        if parts[0] != prefix:
            _fail(label, f"unexpected key {key!r} (expected {prefix}.* entries)")
        walk(value, parts[1:])
    return out


def _load_data(data: dict, label: str) -> LoadedPuzzle:
    for required in ("chart", "bundle", "solder"):
        if required not in data:
            _fail(label, f"missing [{required}] section")

    chart_sec = data["chart"]
    coords = chart_sec.get("coords")
    domain = chart_sec.get("domain")
    dim = chart_sec.get("dim")
    if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
        _fail(label, "chart.coords must be a list of names")
    if dim != len(coords):
        _fail(label, f"chart.dim = {dim} but {len(coords)} coordinates listed")
    if not isinstance(domain, list) or len(domain) != dim:
        _fail(label, "chart.domain must list one [lo, hi] pair per coordinate")
    box = []
    for pair in domain:
        if not isinstance(pair, list) or len(pair) != 2:
            _fail(label, "chart.domain entries must be [lo, hi] pairs")
        box.append((float(pair[0]), float(pair[1])))
    try:
        chart = Chart(tuple(coords), tuple(box))
    except Exception as err:
        _fail(label, f"invalid chart: {err}")
    m = chart.dim

    bundle_sec = data["bundle"]
    rank = bundle_sec.get("rank")
    if not isinstance(rank, int) or rank < 1:
        _fail(label, "bundle.rank must be a positive integer")
    fiber_metric = None
    if "metric" in bundle_sec:
        rows = bundle_sec["metric"]
        if not isinstance(rows, list) or len(rows) != rank or any(
            not isinstance(r, list) or len(r) != rank for r in rows
        ):
            _fail(label, f"bundle.metric must be a {rank}x{rank} matrix of expressions")
        entries = tuple(
            tuple(
                _parse(rows[i][j], chart.names, f"bundle.metric[{i}][{j}]", label)
                for j in range(rank)
            )
            for i in range(rank)
        )
        fiber_metric = FiberMetric(chart, rank, entries)

    zero = fm.zero_form(chart, 1)
    conn_rows = [[zero for _ in range(rank)] for _ in range(rank)]
    if "connection" in data:
        for (i, j), coeffs in _dotted_entries(
            data["connection"], "omega", 2, label
        ).items():
            if not (1 <= i <= rank and 1 <= j <= rank):
                _fail(label, f"omega.{i}.{j} is outside the rank-{rank} bundle")
            if not isinstance(coeffs, list) or len(coeffs) != m:
                _fail(label, f"omega.{i}.{j} must list {m} coefficient expressions")
            parsed = {
                (a,): _parse(coeffs[a], chart.names, f"omega.{i}.{j}[{a}]", label)
                for a in range(m)
            }
            conn_rows[i - 1][j - 1] = DifferentialForm(chart, 1, parsed)
    omega = ConnectionForms(chart, rank, tuple(tuple(r) for r in conn_rows))

    solder_sec = dict(data["solder"])
    degree = solder_sec.pop("degree", None)
    if not isinstance(degree, int) or degree < 1:
        _fail(label, "solder.degree must be a positive integer")
    phi_entries = _dotted_entries(solder_sec, "phi", 1, label)
    comps = [fm.zero_form(chart, degree) for _ in range(rank)]
    for (i,), table in phi_entries.items():
        if not (1 <= i <= rank):
            _fail(label, f"phi.{i} is outside the rank-{rank} bundle")
        if not isinstance(table, dict):
            _fail(label, f"phi.{i} must be a table of multi-index keys")
        coeffs = {}
        for key, text in table.items():
            try:
                idx = tuple(int(s.strip()) for s in str(key).split(","))
            except ValueError:
                _fail(label, f"phi.{i} key {key!r} is not a comma-separated index")
            if len(idx) != degree:
                _fail(label, f"phi.{i} key {key!r} needs {degree} indices")
            if any(not 0 <= a < m for a in idx):
                _fail(label, f"phi.{i} key {key!r} indexes outside the chart")
            if any(idx[k] >= idx[k + 1] for k in range(len(idx) - 1)):
                _fail(label, f"phi.{i} key {key!r} must be strictly increasing")
            coeffs[idx] = _parse(text, chart.names, f"phi.{i}[{key}]", label)
        comps[i - 1] = DifferentialForm(chart, degree, coeffs)
    phi = BundleValuedForm(chart, rank, degree, tuple(comps))

    chart_metric = None
    if "chart_metric" in data:
        rows = data["chart_metric"].get("rows")
        if not isinstance(rows, list) or len(rows) != m or any(
            not isinstance(r, list) or len(r) != m for r in rows
        ):
            _fail(label, f"chart_metric.rows must be a {m}x{m} matrix of expressions")
        chart_metric = [
            [_parse(rows[i][j], chart.names, f"chart_metric.rows[{i}][{j}]", label)
             for j in range(m)]
            for i in range(m)
        ]

    meta = data.get("meta", {})
    if not isinstance(meta, dict):
        _fail(label, "[meta] must be a table")
    for cmd in meta.get("commands", []):
        if cmd not in COMMANDS:
            _fail(label, f"meta.commands lists unknown command {cmd!r}")
    for cmd in meta.get("expect_fail", []):
        if cmd not in meta.get("commands", []):
            _fail(label, f"meta.expect_fail lists {cmd!r} which is not in meta.commands")

    name = meta.get("name", label)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            puzzle = Puzzle(
                chart, rank, omega, phi, fiber_metric=fiber_metric, name=name
            )
        except Exception as err:
            _fail(label, f"invalid puzzle data: {err}")
    return LoadedPuzzle(puzzle, chart_metric, meta, label)


def load_puzzle_file(path: str) -> LoadedPuzzle:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise PuzzleFileError(f"{path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise PuzzleFileError(f"{path}: TOML parse error: {err}") from err
    return _load_data(data, path)


def load_puzzle(path: str) -> Puzzle:
    """Load a puzzle file, discarding the CLI-only sections."""
    return load_puzzle_file(path).puzzle


# ---------------------------------------------------------------------------
# command implementations


def _record(check, max_residual, tolerance, passed, samples, wall, timing):
    return {
        "check": check,
        "max_residual": None if max_residual is None else float(max_residual),
        "tolerance": float(tolerance),
        "passed": bool(passed),
        "samples": int(samples),
        "wall_time": round(wall, 6) if timing else 0.0,
    }


def _cmd_check(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    pts = fm.sample_points(p.chart, opts.samples, seed=opts.seed)
    resid = pz.integrability_residual(p)
    worst = max(fm.max_abs_on(resid.component(i), pts) for i in range(p.rank))
    rec = [("integrability", worst, opts.tol, worst <= opts.tol, opts.samples)]
    details = {
        "degree": p.degree,
        "rank": p.rank,
        "metric_compatible": p.metric_compatible,
    }
    return rec, details


def _cmd_classify(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    profile = pz.rank_profile(p, samples=opts.samples, seed=opts.seed)
    details = {
        "classification": profile.classification,
        "rank": profile.rank,
        "kernel_dim": profile.kernel_dim,
        "domain_dim": profile.domain_dim,
        "codomain_dim": profile.codomain_dim,
    }
    rec = [("rank-profile", 0.0, 0.0, True, opts.samples)]
    return rec, details


def _cmd_metric(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    g = pz.induced_metric(p)
    m = p.chart.dim
    pts = [p.chart.center()] + list(fm.sample_points(p.chart, opts.samples, seed=opts.seed))
    min_eig = np.inf
    for pt in pts:
        mat = np.array([[ex.evaluate(g[i][j], pt) for j in range(m)] for i in range(m)])
        min_eig = min(min_eig, float(np.linalg.eigvalsh(mat).min()))
    rec = [("positive-definite", max(0.0, -min_eig), 0.0, min_eig > 0.0, len(pts))]
    center = p.chart.center()
    details = {
        "entries_at_center": [
            [float(ex.evaluate(g[i][j], center)) for j in range(m)] for i in range(m)
        ],
        "min_eigenvalue": float(min_eig),
    }
    return rec, details


def _cmd_embed(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    frame = em.adapted_frame(p)
    res = em.verify_embedding(frame, samples=min(opts.samples, 15), seed=opts.seed)
    rec = [
        (f"ambient-{key}", value, opts.tol, value <= opts.tol, min(opts.samples, 15))
        for key, value in sorted(res.items())
    ]
    details = {"normal_count": frame.normal_count, "chart_dim": p.chart.dim}
    return rec, details


def _default_slice(p: Puzzle):
    center = p.chart.center()
    kernel = pz.kernel_distribution(p, center)
    if kernel.shape[0] != 1:
        raise PuzzleFileError(
            "quotient needs a one-dimensional kernel; "
            f"found {kernel.shape[0]} directions at the chart center"
        )
    c_idx = int(np.argmax(np.abs(kernel[0])))
    coord = p.chart.names[c_idx]
    return coord, center[coord]


def _cmd_quotient(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    if opts.slice_coord is not None:
        coord = opts.slice_coord
        value = opts.slice_value if opts.slice_value is not None else p.chart.center().get(coord)
        if value is None:
            raise PuzzleFileError(f"{coord!r} is not a chart coordinate")
    else:
        coord, value = _default_slice(p)
    qp = si.build_quotient(p, coord, float(value))
    ver = si.verify_quotient(qp, samples=min(opts.samples, 10), seed=opts.seed)
    tol_fd = max(opts.tol, 1e-6)
    q_pts = fm.sample_points(qp.quotient.chart, opts.samples, seed=opts.seed)
    q_res = pz.integrability_residual(qp.quotient)
    q_worst = max(
        fm.max_abs_on(q_res.component(i), q_pts) for i in range(qp.quotient.rank)
    )
    rec = [
        ("quotient-solder-pullback", ver["phi"], tol_fd, ver["phi"] <= tol_fd,
         min(opts.samples, 10)),
        ("quotient-metric-pullback", ver["metric"], tol_fd, ver["metric"] <= tol_fd,
         min(opts.samples, 10)),
        ("quotient-integrability", q_worst, opts.tol, q_worst <= opts.tol, opts.samples),
    ]
    details = {
        "slice_coord": coord,
        "slice_value": float(value),
        "quotient_dim": qp.quotient.chart.dim,
    }
    return rec, details


def _planar_family(p: Puzzle) -> si.SurfaceFamily:
    chart = p.chart
    if chart.dim < 2:
        raise PuzzleFileError("transport needs at least two chart coordinates")
    t_var, s_var = "t", "s"
    while t_var in chart.names:
        t_var += "_"
    while s_var in chart.names:
        s_var += "_"
    center = chart.center()
    comps = []
    halves = [0.25 * (hi - lo) for lo, hi in chart.box]
    for a, nm in enumerate(chart.names):
        base = ex.constant(center[nm])
        if a == 0:
            comps.append(ex.add(base, ex.variable(t_var)))
        elif a == 1:
            comps.append(ex.add(base, ex.variable(s_var)))
        else:
            comps.append(base)
    return si.SurfaceFamily(
        chart,
        tuple(comps),
        (-halves[0], halves[0]),
        (-halves[1], halves[1]),
        t_var=t_var,
        s_var=s_var,
    )


def _cmd_transport(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    family = _planar_family(p)
    table = si.integrate_transport_system(p, family, t_samples=7, s_steps=opts.steps)
    h = (family.s_range[1] - family.s_range[0]) / opts.steps
    tol_tbl = max(opts.tol, 10.0 * h**4)
    resid = si.identity_residual(p, family)
    t_grid = np.linspace(family.t_range[0], family.t_range[1], 9)
    s_grid = np.linspace(family.s_range[0], family.s_range[1], 9)
    worst_ident = 0.0
    for e in resid:
        for tv in t_grid:
            for sv in s_grid:
                val = ex.evaluate(e, {family.t_var: float(tv), family.s_var: float(sv)})
                worst_ident = max(worst_ident, abs(val))
    rec = [
        ("transport-tables", table.max_error, tol_tbl, table.max_error <= tol_tbl,
         table.predicted.size),
        ("transport-identity", worst_ident, opts.tol, worst_ident <= opts.tol, 81),
    ]
    details = {"s_steps": opts.steps, "step_size": h}
    return rec, details


def _cmd_palatini(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    res = pl.palatini_residual(p, samples=opts.samples, seed=opts.seed)
    ein = pl.einstein_residual(p, samples=opts.samples, seed=opts.seed)
    ident = pl.stationarity_identity_residual(p, samples=min(opts.samples, 15), seed=opts.seed)
    tol_id = max(opts.tol, 1e-6)
    rec = [
        ("stationarity-forms", res.max_abs, opts.tol, res.max_abs <= opts.tol,
         opts.samples),
        ("einstein-tensor", ein.max_abs, opts.tol, ein.max_abs <= opts.tol,
         opts.samples),
        ("first-second-order-agreement", ident, tol_id, ident <= tol_id,
         min(opts.samples, 15)),
    ]
    details = {}
    try:
        quad = pl.converge_action(p)
        rec.append(("action-quadrature", quad.error_estimate, 1e-8 * (1 + abs(quad.value)),
                    True, quad.nodes_per_axis))
        details["action"] = quad.value
        details["quadrature_nodes"] = quad.nodes_per_axis
    except ValueError:
        rec.append(("action-quadrature", None, 0.0, False, 0))
    return rec, details


def _cmd_yangmills(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    m = p.chart.dim
    if loaded.chart_metric is not None:
        g, source = loaded.chart_metric, "file"
    else:
        g = [
            [ex.constant(1.0 if i == j else 0.0) for j in range(m)] for i in range(m)
        ]
        source = "euclidean-default"
    res = pl.yang_mills_residual(p.omega, g)
    pts = fm.sample_points(p.chart, opts.samples, seed=opts.seed)
    worst = max(
        fm.max_abs_on(res[i][j], pts) for i in range(p.rank) for j in range(p.rank)
    )
    rec = [("gauge-residual", worst, opts.tol, worst <= opts.tol, opts.samples)]
    details = {"chart_metric": source}
    return rec, details


def _cmd_observable(loaded: LoadedPuzzle, opts):
    p = loaded.puzzle
    text = opts.alpha if opts.alpha is not None else p.chart.names[0]
    alpha = _parse(text, p.chart.names, "--alpha", loaded.label)
    result = ob.classify_solvability(p, alpha, samples=opts.samples, seed=opts.seed)
    solvable = result.kind != "unsolvable"
    worst = abs(result.witness_value)
    rec = [("solvability", worst, opts.tol, solvable, opts.samples)]
    details = {"alpha": text, "kind": result.kind,
               "annihilator_dim": result.annihilator_dim}
    if result.witness_point is not None:
        details["witness_point"] = {k: float(v) for k, v in result.witness_point.items()}
        details["witness_direction"] = [float(v) for v in result.witness_direction]
    return rec, details


_DISPATCH = {
    "check": _cmd_check,
    "classify": _cmd_classify,
    "metric": _cmd_metric,
    "embed": _cmd_embed,
    "quotient": _cmd_quotient,
    "transport": _cmd_transport,
    "palatini": _cmd_palatini,
    "yangmills": _cmd_yangmills,
    "observable": _cmd_observable,
}


def run_command(command: str, loaded: LoadedPuzzle, opts) -> dict:
    """Dispatch one check command and assemble its report document."""
    if command not in _DISPATCH:
        raise PuzzleFileError(f"unknown command {command!r}")
    start = time.perf_counter()
    raw, details = _DISPATCH[command](loaded, opts)
    wall = time.perf_counter() - start
    checks = [
        _record(name, residual, tolerance, passed, samples, wall, opts.timing)
        for name, residual, tolerance, passed, samples in raw
    ]
    return {
        "puzzle": loaded.puzzle.name or loaded.label,
        "command": command,
        "checks": checks,
        "details": details,
        "passed": all(c["passed"] for c in checks),
    }


def _corpus_paths(directory: Optional[str]):
    if directory is not None:
        import pathlib

        root = pathlib.Path(directory)
        if not root.is_dir():
            raise PuzzleFileError(f"{directory}: not a directory")
        return [(f.name, f) for f in sorted(root.glob("*.toml"))]
    pkg = resources.files(__package__) / "fixtures"
    return sorted(
        ((f.name, f) for f in pkg.iterdir() if f.name.endswith(".toml")),
        key=lambda item: item[0],
    )


def _report_all(directory: Optional[str], opts) -> dict:
    fixtures = []
    overall = True
    for name, path in _corpus_paths(directory):
        with path.open("rb") as fh:
            data = tomllib.load(fh)
        loaded = _load_data(data, name)
        expect_fail = set(loaded.meta.get("expect_fail", []))
        commands = loaded.meta.get("commands", ["check", "classify"])
        runs = []
        matched = True
        for command in commands:
            report = run_command(command, loaded, opts)
            expected = command not in expect_fail
            agree = report["passed"] == expected
            matched = matched and agree
            runs.append(
                {
                    "command": command,
                    "passed": report["passed"],
                    "expected_pass": expected,
                    "as_expected": agree,
                    "checks": report["checks"],
                }
            )
        overall = overall and matched
        fixtures.append(
            {
                "file": name,
                "puzzle": loaded.puzzle.name or name,
                "commands": runs,
                "as_expected": matched,
            }
        )
    return {"command": "report-all", "fixtures": fixtures, "passed": overall}


def _emit(report: dict, opts) -> int:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if opts.report is not None:
        with open(opts.report, "w") as fh:
            fh.write(text)
    return 0 if report["passed"] else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solderlab",
        description="Residual checks for chart-level solder-form puzzles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS + ("report-all",):
        p = sub.add_parser(command)
        if command == "report-all":
            p.add_argument("puzzle_file", nargs="?", default=None,
                           help="directory of .toml puzzles (default: shipped corpus)")
        else:
            p.add_argument("puzzle_file")
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--samples", type=int, default=50)
        p.add_argument("--steps", type=int, default=200)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", default=None, help="also write the JSON report here")
        p.add_argument("--timing", action="store_true",
                       help="include real wall times (breaks byte-determinism)")
        p.add_argument("--alpha", default=None,
                       help="chart function for the observable command")
        p.add_argument("--slice-coord", dest="slice_coord", default=None)
        p.add_argument("--slice-value", dest="slice_value", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        opts = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        if opts.command == "report-all":
            report = _report_all(opts.puzzle_file, opts)
        else:
            loaded = load_puzzle_file(opts.puzzle_file)
            report = run_command(opts.command, loaded, opts)
    except PuzzleFileError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    except (ValueError, fm.ChartMismatch, ex.DomainEvalError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    return _emit(report, opts)


if __name__ == "__main__":
    sys.exit(main())
