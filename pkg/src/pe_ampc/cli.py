"""Command-line entry point ``pe-ampc``.

Exit codes: 0 success, 1 invariant breach or rejected update, 2 bad
input or design failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import adaptation, exciter, invariant, sim
from .models import PlantModel
from .polyhedra import vertices
from .regulator import DesignError, MPCInfeasible, initialize_nominal

log = logging.getLogger("pe_ampc")


def _load(args) -> sim.ScenarioConfig:
    cfg = sim.ScenarioConfig.load(args.config)
    over = {}
    if getattr(args, "seed", None) is not None:
        over["run.seed"] = args.seed
        over["exciter.seed"] = args.seed
    if getattr(args, "strategy", None) is not None:
        over["adaptation.strategy"] = args.strategy
    return cfg.with_overrides(**over) if over else cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def cmd_design(args) -> int:
    cfg = _load(args)
    setup = sim.design_controller(cfg)
    d, nom = setup.design, setup.nominal
    A_K = nom.A + nom.B @ d.K
    A_Kt = nom.A + nom.B @ d.Kt
    report = {
        "summary": d.summary(nom),
        "S_rpi": invariant.check_rpi(d.S, A_Kt, d.W),
        "S_admissible": invariant.check_admissible(d.S, d.X, d.Kt, d.U_hat),
        "Zf_invariant": invariant.check_pi(d.Zf, A_K),
        "Wp_vertices": vertices(d.Wp.set),
        "state_reachable": exciter.state_reachability_check(nom),
        "output_reachable": exciter.output_reachability_check(nom, d.Kt),
        "required_order": exciter.required_order(nom.n, nom.m),
        "h": cfg.h,
        "l": cfg.l,
    }
    if setup.buffer is not None:
        report["buffer"] = setup.buffer
        report["buffer_pe_min_eig"] = exciter.pe_measure(setup.buffer, cfg.h + cfg.l - 2, cfg.l, cfg.h,
                                                         cfg.rho0).min_eig
    out = _out(args)
    _dump(d.to_dict(), out / "design.json")
    _dump(report, out / "design_report.json")
    for key in ("S_rpi", "S_admissible", "Zf_invariant"):
        print(f"{key:16s} {report[key]}")
    for key, val in report["summary"].items():
        print(f"{key:16s} {val}")
    if "buffer_pe_min_eig" in report:
        print(f"{'buffer PE':16s} {report['buffer_pe_min_eig']:.6g}")
    return 0 if report["S_rpi"] and report["S_admissible"] and report["Zf_invariant"] else 1


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out(args)
    try:
        trace = sim.run_closed_loop(cfg, assert_invariants=not args.no_assert)
    except sim.InvariantBreach as exc:
        print(f"invariant breach at step {exc.step}: {exc.kind}\n{exc}", file=sys.stderr)
        _dump({"step": exc.step, "kind": exc.kind, "message": str(exc)}, out / "breach.json")
        return 1
    trace.to_csv(out / "trace.csv")
    (out / "events.jsonl").write_text(trace.events_json())
    ok = trace.all_flags_ok()
    print(f"{len(trace)} steps, invariants {'held' if ok else 'BROKEN'}; "
          f"{sum(e['type'] == 'model_update' for e in trace.events)} model updates")
    for start, stop, mid, err in sim.window_errors(trace, cfg):
        print(f"window {start:4d}-{stop:4d} {mid:16s} final estimate error {err:.3e}")
    return 0 if ok else 1


def _candidate(cfg: sim.ScenarioConfig, desc: str) -> PlantModel:
    if desc in cfg.models:
        return cfg.models[desc]
    data = json.loads(Path(desc).read_text())
    return PlantModel(data["A"], data["B"])


def cmd_verify_update(args) -> int:
    cfg = _load(args)
    cand = _candidate(cfg, args.candidate)
    strategy = args.check
    lam = cfg.lambda_contractive if strategy == adaptation.ROBUSTIFIED else cfg.terminal_lambda
    setup = sim.design_controller(cfg.with_overrides(**{"controller.terminal_lambda": lam,
                                                        "adaptation.strategy": "none"}))
    d = setup.design
    ctrl = initialize_nominal(cfg.x0, d, setup.nominal, cfg.z0_mode)
    if strategy == adaptation.VERIFY:
        verdict = adaptation.verify_update(cand, setup.family, d, ctrl.z, ctrl.last_cost)
    elif strategy == adaptation.ROBUSTIFIED:
        verdict = adaptation.robustified_gate_check(cand, cfg.family_sub, d, lam, ctrl.z, ctrl.last_cost,
                                                    family=setup.family, nominal=setup.nominal)
    else:
        bundle = adaptation.full_redesign(cand, setup.family, cfg.X, cfg.U, (cfg.Q, cfg.R), cfg.alpha, cfg.N,
                                          eps=cfg.mrpi_eps, terminal_lambda=cfg.terminal_lambda)
        verdict = adaptation.redesign_gate(bundle, ctrl.z, ctrl.last_cost)
    A_K = cand.A + cand.B @ d.K
    result = {**verdict.to_dict(), "terminal_invariant": invariant.check_pi(d.Zf, A_K),
              "terminal_lambda": lam}
    print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    if args.out:
        _dump(result, _out(args) / "verdict.json")
    return 0 if verdict.admissible else 1


def cmd_pe_check(args) -> int:
    cfg = _load(args)
    setup = sim.design_controller(cfg.with_overrides(**{"exciter.enabled": True}))
    buf = setup.buffer
    end = cfg.h + cfg.l - 2
    result = {
        "h": cfg.h, "l": cfg.l, "rho0": cfg.rho0,
        "required_order": exciter.required_order(cfg.nominal.n, cfg.nominal.m),
        "buffer": buf,
        "buffer_min_eig": exciter.pe_measure(buf, end, cfg.l, cfg.h, cfg.rho0).min_eig,
        "state_reachable": exciter.state_reachability_check(cfg.nominal),
        "output_reachable": exciter.output_reachability_check(cfg.nominal, setup.design.Kt),
    }
    ok = result["buffer_min_eig"] > exciter.PE_MARGIN
    if args.trace:
        trace = _read_trace(args.trace)
        w = np.column_stack([trace[c] for c in _cols(trace, "w_hat")]).astype(float)
        margins = [exciter.pe_measure(w, i, cfg.l, cfg.h, cfg.rho0).min_eig for i in range(end + 1, len(w))]
        result["trace_min_eig"] = float(min(margins)) if margins else None
        ok = ok and (not margins or min(margins) > exciter.PE_MARGIN)
    print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    return 0 if ok else 1


def cmd_compare(args) -> int:
    cfg = _load(args)
    report = sim.compare_baseline(cfg)
    if args.out:
        _dump(report, _out(args) / "compare.json")
    for label, rep in report.items():
        errs = ", ".join(f"{w['final_error']:.2e}" for w in rep["window_errors"])
        print(f"{label:12s} cost {rep['regulation_cost']:10.3f}  PE min {rep['pe_min_eig_min']:+.3e}  "
              f"window errors [{errs}]")
    return 0


def _read_trace(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header") from None
        rows = list(reader)
    return {name: [r[k] for r in rows] for k, name in enumerate(header)}


def _cols(trace: dict, prefix: str) -> list:
    cols = sorted((c for c in trace if c.startswith(prefix) and c[len(prefix):].isdigit()),
                  key=lambda c: int(c[len(prefix):]))
    if not cols:
        raise ValueError(f"trace has no {prefix}* columns")
    return cols


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_export_plots(args) -> int:
    cfg = _load(args)
    trace = _read_trace(args.trace)
    for col in ("i", "plant_id"):
        if col not in trace:
            raise ValueError(f"trace is missing column {col!r}")
    steps = trace["i"]
    out = _out(args)
    inputs = _cols(trace, "w_hat") + _cols(trace, "u") + _cols(trace, "v")
    _write(out / "inputs.csv", ["i"] + inputs, zip(steps, *(trace[c] for c in inputs)))
    states = _cols(trace, "x") + _cols(trace, "z")
    _write(out / "states.csv", ["i"] + states, zip(steps, *(trace[c] for c in states)))
    theta_cols = sorted((c for c in trace if c.startswith("theta_")),
                        key=lambda c: tuple(int(p) for p in c.split("_")[1:]))
    if not theta_cols:
        raise ValueError("trace has no theta_* columns")
    truth = []
    for mid in trace["plant_id"]:
        th = cfg.models[mid].theta()
        truth.append([repr(float(th[tuple(int(p) for p in c.split("_")[1:])])) for c in theta_cols])
    header = ["i", "plant_id"] + [f"{c}_hat" for c in theta_cols] + [f"{c}_true" for c in theta_cols]
    rows = [[s, mid, *(trace[c][k] for c in theta_cols), *truth[k]]
            for k, (s, mid) in enumerate(zip(steps, trace["plant_id"]))]
    _write(out / "estimates.csv", header, rows)
    print(f"wrote inputs.csv, states.csv, estimates.csv to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pe-ampc", description="Adaptive tube MPC with persistently exciting inputs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--config", required=True, help="scenario JSON, or the name of a bundled scenario")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override run and exciter seeds")
        sp.add_argument("--strategy", choices=["verify", "redesign", "robustified", "none"], default=None,
                        help="override the model-update strategy")
        return sp

    common(sub.add_parser("design", help="run the offline design pipeline"), "out").set_defaults(func=cmd_design)
    sp = common(sub.add_parser("simulate", help="run the closed loop and write a trace"), "out")
    sp.add_argument("--no-assert", action="store_true", help="record invariant breaches instead of aborting")
    sp.set_defaults(func=cmd_simulate)
    sp = common(sub.add_parser("verify-update", help="check one candidate prediction model"))
    sp.add_argument("--candidate", required=True, help="model id from the config or a JSON file with A and B")
    sp.add_argument("--check", choices=list(adaptation.STRATEGIES), default=adaptation.VERIFY)
    sp.set_defaults(func=cmd_verify_update)
    sp = common(sub.add_parser("pe-check", help="check buffer synthesis and trace excitation"))
    sp.add_argument("--trace", default=None, help="trace CSV from simulate")
    sp.set_defaults(func=cmd_pe_check)
    common(sub.add_parser("compare", help="exciter on/off comparison"), None).set_defaults(func=cmd_compare)
    sp = common(sub.add_parser("export-plots", help="write plot-ready CSV series from a trace"), "plots")
    sp.add_argument("--trace", required=True, help="trace CSV from simulate")
    sp.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    level = os.environ.get("PE_AMPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DesignError as exc:
        print(f"design failed at stage '{exc.stage}': {exc}" + (f" (hint: {exc.hint})" if exc.hint else ""),
              file=sys.stderr)
        return 2
    except exciter.ExcitationError as exc:
        print(f"excitation design failed: {exc} (hint: lower rho0 or enlarge the exciting share 1 - alpha)",
              file=sys.stderr)
        return 2
    except MPCInfeasible as exc:
        print(f"nominal problem infeasible: {exc}", file=sys.stderr)
        return 2
    except (sim.ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
