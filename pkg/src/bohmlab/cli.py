"""Command-line front end.

    bohmlab simulate  --scenario X [--out DIR] [--threads K] [--override k=v]
    bohmlab flux      --scenario X [--out DIR] ...
    bohmlab transport --scenario X [--out DIR] ...
    bohmlab report    --scenario X [--out DIR] ...
    bohmlab validate  --scenario X

X is a TOML file path or a bundled scenario name.  Exit codes: 0 success,
2 configuration/validation error (including missing inputs for `report`),
3 numerical failure.  All floating-point output is formatted with 17
significant digits, so identical scenario + seed reproduce byte-identical
JSON summaries.  `--threads` is accepted for orchestration symmetry; the
numerics are vectorized and the results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import scenarios as sc_mod
from .scenarios import Scenario, ScenarioError, load_scenario

__all__ = ["main", "dump_json"]


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dump_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k in sorted(obj):
            items.append(f'{pad}  {json.dumps(str(k))}: {dump_json(obj[k], indent + 1)}')
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad}  {dump_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _parse_override(text: str):
    if "=" not in text:
        raise ScenarioError(f"override '{text}': expected key=value")
    key, raw = text.split("=", 1)
    for conv in (int, float):
        try:
            return key, conv(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return key, raw.lower() == "true"
    return key, raw


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario)
    for ov in args.override or []:
        key, val = _parse_override(ov)
        sc = sc.override(key, val)
    return sc


def _paths_csv(paths, d: int) -> str:
    lines = ["path_id,t," + ",".join(f"q{k}" for k in range(d)) + ",status"]
    for i, p in enumerate(paths):
        status = p.stop_cause.value if (p.status == "ok" and p.stop_cause) else p.status
        for j in range(len(p.t)):
            coords = ",".join(format(x, ".17g") for x in p.q[j])
            lines.append(f"{i},{format(p.t[j], '.17g')},{coords},{status}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    sc = _load(args)
    out = Path(args.out)
    rows, paths0, meta = sc_mod.simulate_rows(sc)
    summary = {
        "scenario": sc.name, "seed": sc.seed, "samples": sc.samples,
        "horizon": sc.horizon, "rows": rows, "metadata": meta,
        "threads": args.threads,
    }
    _write(out / "summary.json", dump_json(summary) + "\n")
    if sc.output.get("paths", "full") == "full" and paths0 is not None:
        d = paths0[0].d if paths0 else 1
        _write(out / "paths.csv", _paths_csv(paths0, d))
    print(f"simulate: {sc.name}: {len(rows)} schedule rows -> {out}")
    for r in rows:
        st = r["stats"]
        print(f"  eps={r['regions']['epsilon']:g} n={r['regions']['ball_radius']:g} "
              f"p_hat={st['p_hat']:.3e} counts={st['counts']}")
    return 0


def cmd_flux(args) -> int:
    from .flux import cover_dump_csv

    sc = _load(args)
    out = Path(args.out)
    rows, covers = sc_mod.flux_rows(sc, return_covers=True)
    _write(out / "flux_report.json",
           dump_json({"scenario": sc.name, "rows": rows}) + "\n")
    for row, cover in zip(rows, covers):
        if cover is not None and cover.cubes:
            out.mkdir(parents=True, exist_ok=True)
            cover_dump_csv(cover, out / f"nodal_cover_eps{row['regions']['epsilon']:g}.csv")
    csv = ["epsilon,ball_radius,horizon,nodal,singular,infinity,initial_excluded"]
    for r in rows:
        g = r["regions"]
        csv.append(",".join(format(v, ".17g") for v in (
            g["epsilon"], g["ball_radius"], g["horizon"], r["nodal"],
            r["singular"], r["infinity"], r["initial_excluded"])))
    _write(out / "flux_sweep.csv", "\n".join(csv) + "\n")
    print(f"flux: {sc.name}: {len(rows)} rows -> {out}")
    for r in rows:
        print(f"  eps={r['regions']['epsilon']:g} N={r['nodal']:.3e} "
              f"S={r['singular']:.3e} I={r['infinity']:.3e} excl={r['initial_excluded']:.3e}")
    return 0


def cmd_transport(args) -> int:
    from .transport1d import (build_cdf_table, circle_transport_many,
                              node_scaling_fit, transport_map_many)

    sc = _load(args)
    out = Path(args.out)
    model, params = sc_mod.build_model(sc)
    tcfg = sc.transport
    times = [float(t) for t in tcfg.get("times", [sc.horizon])]
    n_q0 = int(tcfg.get("q0_count", 41))
    # grid-backed models carry no information below their own resolution
    from .propagator import GridBacked
    n_cells = min(8192, 2 * model.store.spec.points[0]) if isinstance(model, GridBacked) \
        else 8192
    table0 = build_cdf_table(model, 0.0, n_cells=n_cells)
    levels = np.linspace(0.02, 0.98, n_q0)
    q0s = np.interp(levels, table0.F, table0.grid)
    lines = ["q0,t,Q_t,level"]
    for t in times:
        # table-based inversion: vectorized, ~cell-size accurate (plot data)
        if model.periodic:
            Q = circle_transport_many(model, q0s, t, n_cells=n_cells)
        else:
            Q = transport_map_many(model, q0s, t, n_cells=n_cells)
        for q0, lv, qq in zip(q0s, levels, Q):
            lines.append(",".join(format(v, ".17g") for v in (q0, t, qq, lv)))
    _write(out / "transport_curves.csv", "\n".join(lines) + "\n")
    report = {"scenario": sc.name, "times": times, "q0_count": n_q0}
    if "node" in tcfg:
        fit = node_scaling_fit(model, tuple(tcfg["node"]), int(tcfg.get("node_order", 1)),
                               t_window=tuple(tcfg.get("t_window", (1e-4, 1e-2))))
        report["scaling_fit"] = {
            "slope": fit.slope, "prefactor": fit.prefactor,
            "expected_slope": fit.expected_slope, "n_points": fit.n_points,
            "not_a_node": fit.not_a_node,
        }
        print(f"transport: scaling fit slope={fit.slope:.4f} "
              f"(expected {fit.expected_slope:.4f}) prefactor={fit.prefactor:.4f}")
    _write(out / "scaling_fit.json", dump_json(report) + "\n")
    print(f"transport: {sc.name}: curves at {times} -> {out}")
    return 0


def cmd_report(args) -> int:
    from .stats import global_existence_report

    sc = _load(args)
    out = Path(args.out)
    sum_path = out / "summary.json"
    flux_path = out / "flux_report.json"
    missing = [str(p) for p in (sum_path, flux_path) if not p.exists()]
    if missing:
        print(f"report: missing inputs: {', '.join(missing)} "
              f"(run `simulate` and `flux` first)", file=sys.stderr)
        return 2
    sim = json.loads(sum_path.read_text())
    flx = json.loads(flux_path.read_text())
    entries = sc_mod.existence_entries(sim["rows"], flx["rows"], sc)
    report = global_existence_report(entries)
    _write(out / "existence_report.json",
           dump_json({"scenario": sc.name, **report.as_dict()}) + "\n")
    csv = ["epsilon,ball_radius,p_hat,sigma,initial_excluded,nodal,singular,infinity,bound_sum,passes"]
    for r in report.rows:
        csv.append(",".join(format(v, ".17g") for v in (
            r.epsilon, r.n, r.p_hat, r.sigma, r.initial_excluded, r.nodal,
            r.singular, r.infinity, r.bound_sum)) + f",{r.passes}")
    _write(out / "existence_table.csv", "\n".join(csv) + "\n")
    print(f"report: {sc.name}: all rows pass: {report.all_pass}; "
          f"bound sums decreasing: {report.sums_decreasing}")
    for r in report.rows:
        print(f"  eps={r.epsilon:g} n={r.n:g}: p_hat={r.p_hat:.3e} "
              f"sum={r.bound_sum:.3e} pass={r.passes}")
    return 0


def cmd_validate(args) -> int:
    sc = _load(args)
    model, params = sc_mod.build_model(sc) if args.deep else (None, None)
    print(f"validate: {sc.name}: ok" + (" (model built)" if args.deep else ""))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bohmlab",
                                     description="guided-trajectory experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("flux", cmd_flux),
                     ("transport", cmd_transport), ("report", cmd_report),
                     ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="TOML file or bundled scenario name")
        p.add_argument("--out", default="bohmlab_out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="orchestration hint; results are independent of it")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a scenario field (dotted path)")
        if name == "validate":
            p.add_argument("--deep", action="store_true",
                           help="also build the model (runs grid propagation)")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"{args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"{args.command}: missing input: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical failures
        from .flux import GridTooCoarse, NotApplicable, QuadratureDivergence
        from .propagator import InsufficientFrames, UnstableStep
        from .stats import MismatchedParameters, TooFewAlive
        from .trajectory import EmptyEnsemble, StepSizeUnderflow

        numerical = (QuadratureDivergence, UnstableStep, StepSizeUnderflow,
                     InsufficientFrames, TooFewAlive, EmptyEnsemble,
                     MismatchedParameters, NotApplicable, GridTooCoarse,
                     FloatingPointError, np.linalg.LinAlgError)
        if isinstance(exc, numerical):
            print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
            return 3
        raise


if __name__ == "__main__":
    sys.exit(main())
