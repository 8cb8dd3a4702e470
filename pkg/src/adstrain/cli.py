"""Command-line entry point: ``adstrain {partition,simulate,sig,cost}``.

Exit codes: 0 success, 1 input error, 2 infeasible, 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from . import scenario as scen
from .errors import Infeasible, InvalidArgument, ScenarioError, SearchSpaceTooLarge

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_AUDIT = 0, 1, 2, 3


def _write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True, default=_jsonable)
        f.write("\n")


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, float) and math.isinf(x):
        return None
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r])


def _emit(fmt, header, rows, obj, out=None):
    out = out or sys.stdout
    if fmt == "json":
        json.dump(obj, out, indent=1, sort_keys=True, default=_jsonable)
        out.write("\n")
    elif fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        cells = [[str(h) for h in header]] + [[f"{v:.6g}" if isinstance(v, float) else str(v) for v in r] for r in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        for r in cells:
            out.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def _seed(args, doc):
    return int(args.seed) if args.seed is not None else int(doc["seed"])


# -- partition -------------------------------------------------------------------


def cmd_partition(args, doc):
    from .partition import (
        GranularityPenalty,
        exact_partition_oracle,
        hybrid_partition,
        load_imbalance,
        memory_bytes,
        plan_objective,
        row_cyclic_plan,
        validate_plan,
    )
    from .workload import ModelSpec

    model = ModelSpec.from_dict(scen.need(doc, "model", "partition"))
    cfg = scen.need(doc, "partition", "partition")
    nodes = cfg["nodes"]
    stats = scen.build_stats(cfg.get("stats"), model)
    penalty = GranularityPenalty(tuple((int(w), float(f)) for w, f in cfg["penalty"])) if "penalty" in cfg else GranularityPenalty()
    splits = tuple(cfg.get("column_splits", (1, 2)))
    cap = scen.mem_capacity(cfg)
    try:
        plan = hybrid_partition(model, nodes, stats, cap, cfg.get("search_budget", 500_000), penalty, splits)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for node, deficit in sorted(exc.deficits.items()):
            print(f"  node {node}: over capacity by {deficit:.6g} bytes", file=sys.stderr)
        _write_json(os.path.join(args.out, "report.json"),
                    {"status": "infeasible", "deficits": {str(k): v for k, v in sorted(exc.deficits.items())}})
        return EXIT_INFEASIBLE
    validate_plan(plan, model)
    row = row_cyclic_plan(model.tables, nodes)
    chosen, baseline = load_imbalance(plan, stats, model), load_imbalance(row, stats, model)
    mem = memory_bytes(plan, model)
    report = {
        "status": "ok",
        "node_count": nodes,
        "plan": {"method": plan.meta.get("method"), "objective": plan.meta.get("objective"), **chosen.to_dict()},
        "row_cyclic": {"objective": plan_objective(row, stats, model, penalty), **baseline.to_dict()},
        "memory": {"bytes_per_node": mem.tolist(), "capacity_per_node": None if math.isinf(cap) else cap,
                   "fits": bool(all(m <= cap for m in mem))},
    }
    rows = [("row_cyclic", report["row_cyclic"]["objective"], baseline.imbalance),
            ("hybrid", report["plan"]["objective"], chosen.imbalance)]
    if args.oracle:
        try:
            exact = exact_partition_oracle(model, nodes, stats, cap, penalty, splits,
                                           cfg.get("oracle_limit", 10_000_000))
        except SearchSpaceTooLarge as exc:
            print(f"error: --oracle: {exc}", file=sys.stderr)
            return EXIT_INPUT
        report["oracle"] = {"objective": exact.meta["objective"], "space": exact.meta["space"],
                            "equal": abs(exact.meta["objective"] - plan.meta["objective"]) <= 1e-9 * max(1.0, exact.meta["objective"])}
        rows.append(("oracle", exact.meta["objective"], load_imbalance(exact, stats, model).imbalance))
    if "exec" in doc:
        report["ladder"] = _ladder(doc, model, nodes, stats, cap, penalty, args.out)
    if "ps" in doc:
        report["ps"] = _ps_report(doc, model)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "plan.json"), "w") as f:
        f.write(plan.to_json(indent=1) + "\n")
    _write_json(os.path.join(args.out, "report.json"), report)
    _emit(args.format, ("plan", "objective", "imbalance"), rows, report)
    return EXIT_OK


def _ladder(doc, model, nodes, declared, cap, penalty, out):
    from .execcost import ContentionModel, SWEEP_COLUMNS, optimization_ladder

    cfg = doc["exec"]
    true_stats = scen.build_stats(cfg.get("true_stats"), model) if "true_stats" in cfg else declared
    contention = ContentionModel(cfg.get("tc_slowdown", 0.05), cfg.get("sc_slowdown", 0.10))
    rows = optimization_ladder(model, nodes, true_stats, declared, cfg["bytes_per_us"], contention, penalty, cap,
                               doc["partition"].get("search_budget", 500_000))
    _write_csv(os.path.join(out, "series", "ladder.csv"), SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows])
    return rows


def _ps_report(doc, model):
    from .ps import rpc_count, ps_step_time, shard_rows_over_ps
    from .rng import make_rng
    from .workload import generate_batch

    cfg = doc["ps"]
    layout = shard_rows_over_ps(model.tables, cfg["ps_count"], cfg.get("scheme", "cyclic"), cfg.get("stack", False))
    batch = generate_batch(model, cfg.get("batch_size", 64), 0, make_rng(doc["seed"], "ps-batch"))
    out = {"n_tables_effective": layout.n_tables_effective}
    for coalesced in (False, True):
        acct = rpc_count(cfg["cores"], layout.n_tables_effective, cfg["ps_count"], coalesced)
        t = ps_step_time(layout, batch, acct, model.tables, cfg.get("rpc_overhead_us", 0.0), cfg.get("per_byte_us", 0.0))
        out["coalesced" if coalesced else "uncoalesced"] = {
            "per_ps_rpcs_per_step": acct.per_ps_rpcs_per_step,
            "rpcs_per_worker_ps_per_batch": acct.rpcs_per_worker_ps_per_batch,
            "step_time_us": t,
        }
    return out


# -- simulate --------------------------------------------------------------------


def _sim_scenario(doc, seed):
    from .sim import SimScenario, preemption_scenario

    if "preemption_calibration" in doc:
        c = doc["preemption_calibration"]
        return preemption_scenario(c["w_max"], c.get("n", 2000), seed, c.get("spacing", 16_000))
    return SimScenario.from_dict(scen.need(doc, "sim", "simulate"))


def cmd_simulate(args, doc):
    from .sim import audit_exactly_once, run, write_report

    seed = _seed(args, doc)
    if args.seeds:
        return _sweep(args, doc, seed)
    sc = _sim_scenario(doc, seed)
    rep = run(sc, seed)
    audit = audit_exactly_once(rep)
    d = write_report(rep, args.out, audit, include_timeline=not args.no_timeline)
    summary = {
        "final_state": _final_state(rep),
        "epochs": len(rep.epochs),
        "committed_epochs": sum(e.committed for e in rep.epochs),
        "final_watermark": rep.final_watermark,
        "advancing_rate": rep.advancing_rate(),
        "commit_fraction": rep.commit_fraction(),
        "audit": audit.summary(),
    }
    if "fleet" in doc:
        summary["chip_demand"] = _fleet(doc, seed, args.out)
        d["chip_demand"] = summary["chip_demand"]
        _write_json(os.path.join(args.out, "report.json"), d)
    _emit(args.format, ("field", "value"), [(k, v if not isinstance(v, dict) else json.dumps(v, sort_keys=True))
                                             for k, v in summary.items()], summary)
    print(audit.summary(), file=sys.stderr)
    return EXIT_OK if audit.passed else EXIT_AUDIT


def _final_state(rep):
    if rep.final_state == "held":
        return "HOLD(permanent)"
    return rep.final_state.upper()


def _sweep(args, doc, seed0):
    from .sim import audit_exactly_once, chaos_scenario, run

    rows = []
    chaos = doc.get("chaos")
    passed = 0
    for s in range(seed0, seed0 + args.seeds):
        sc = chaos_scenario(s, permanent_p=chaos.get("permanent_p", 0.0)) if chaos is not None else _sim_scenario(doc, s)
        rep = run(sc, s)
        a = audit_exactly_once(rep)
        passed += a.passed
        rows.append((s, len(sc.faults), rep.final_state, rep.final_watermark, int(a.passed), a.n_violations))
    header = ("seed", "faults", "final_state", "final_watermark", "passed", "violations")
    _write_csv(os.path.join(args.out, "series", "sweep.csv"), header, rows)
    _write_json(os.path.join(args.out, "report.json"), {"seeds": args.seeds, "passed": passed,
                                                        "failed_seeds": [r[0] for r in rows if not r[4]]})
    verdict = "PASS" if passed == args.seeds else "FAIL"
    print(f"exactly-once: {passed}/{args.seeds} {verdict}")
    return EXIT_OK if passed == args.seeds else EXIT_AUDIT


def _fleet(doc, seed, out):
    from .sim import SimScenario, chip_demand_snapshot, fleet_at, run

    cfg = doc["fleet"]
    t = cfg.get("time", 0)
    pipes = []
    for p in cfg["pipelines"]:
        sc = SimScenario.from_dict(p.get("sim", {}))
        pipes.append((p["name"], p["chips"], run(sc, seed)))
    demand = chip_demand_snapshot(fleet_at(pipes, t, cfg.get("ceiling")))
    _write_csv(os.path.join(out, "series", "fleet_chip_demand.csv"), ("time_us", "training", "queued", "on_hold"),
               [(t, demand.training, demand.queued, demand.on_hold)])
    return demand.to_dict()


# -- sig -------------------------------------------------------------------------


def _sig_service(doc, path):
    from .sig import SigService, SyntheticRawSource
    from .sig.replay import RAW_FIELDS

    src = SyntheticRawSource(RAW_FIELDS, seed=doc["seed"])
    if os.path.exists(path):
        return SigService.load(path, src)
    return SigService(src, doc.get("sig", {}).get("scheduling", "strict"))


def cmd_sig(args, doc):
    from .sig.replay import RAW_FIELDS, fully_shared_workload, recount, replay, shared_pool_workload

    cfg = doc.get("sig", {})
    os.makedirs(args.out, exist_ok=True)
    state = os.path.join(args.out, "sig_state.json")
    svc = _sig_service(doc, state)
    if args.action == "replay":
        w = dict(cfg.get("workload", {"kind": "shared_pool"}))
        kind = w.pop("kind")
        workload = fully_shared_workload(**w) if kind == "fully_shared" else shared_pool_workload(seed=doc["seed"], **w)
        evals_before = dict(svc.evaluations)
        rounds = replay(svc, workload)
        rc = recount(svc.log)
        m = svc.metrics()
        new_evals = {k: v - evals_before.get(k, 0) for k, v in sorted(svc.evaluations.items()) if v != evals_before.get(k, 0)}
        out = {**m, "recount_hit_rate": rc["hit_rate"], "models": len(workload.models),
               "components": len(workload.components), "evaluations_this_replay": new_evals,
               "round_hit_rates": [r["hit_rate"] for r in rounds]}
        _write_csv(os.path.join(args.out, "series", "sig_rounds.csv"), ("round", "hit_rate", "evaluations"),
                   [(i, r["hit_rate"], r["evaluations"]) for i, r in enumerate(rounds)])
    elif args.action == "evict":
        if args.raw_field is not None and args.raw_field not in RAW_FIELDS:
            print(f"error: unknown raw field {args.raw_field!r}; known: {', '.join(RAW_FIELDS)}", file=sys.stderr)
            return EXIT_INPUT
        if args.ttl is not None:
            ev = svc.evict_stale(args.now, args.ttl)
        elif args.raw_field is None and args.pipeline is None and args.key is None:
            print("error: evict needs --raw-field, --pipeline, --key or --ttl", file=sys.stderr)
            return EXIT_INPUT
        else:
            ev = svc.evict_query(args.raw_field, args.pipeline, args.key)
        out = {"evicted": [[k, list(r)] for k, r in ev], "count": len(ev)}
    else:
        out = svc.metrics()
    svc.save(state)
    _write_json(os.path.join(args.out, "report.json"), out)
    flat = [(k, v) for k, v in sorted(out.items()) if not isinstance(v, (dict, list))]
    _emit(args.format, ("metric", "value"), flat, out)
    return EXIT_OK


# -- cost ------------------------------------------------------------------------


def cmd_cost(args, doc):
    from .cost import COST_COLUMNS, ResourceProfile, TcoParams, compare_sig_lig, cost_rows, sig_pool_share, write_cost_csv

    cfg = scen.need(doc, "tco", "cost")
    params = TcoParams.from_dict(cfg.get("params", {}))
    models = [ResourceProfile.from_dict(m) for m in cfg["models"]]
    cmp = compare_sig_lig(models, params)
    os.makedirs(os.path.join(args.out, "series"), exist_ok=True)
    write_cost_csv(cmp, os.path.join(args.out, "series", "cost.csv"))
    rows = cost_rows(cmp)
    report = {"models": rows, "geomean_reduction": cmp.geomean_reduction, "sig_pool_share": sig_pool_share(models, params)}
    _write_json(os.path.join(args.out, "report.json"), report)
    table = [[r[c] for c in COST_COLUMNS] for r in rows] + [["geomean", "", "", cmp.geomean_reduction, "", "", ""]]
    _emit(args.format, COST_COLUMNS, table, report)
    return EXIT_OK


# -- main ------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, metavar="PATH")
    common.add_argument("--out", default="out", metavar="DIR")
    common.add_argument("--seed", type=int, default=None, metavar="U64", help="overrides the scenario seed")
    common.add_argument("--format", choices=("json", "csv", "table"), default="table")

    p = argparse.ArgumentParser(prog="adstrain", description="Recommendation-model training pipeline toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    pp = sub.add_parser("partition", parents=[common], help="partition embedding tables")
    pp.add_argument("--oracle", action="store_true", help="also run the exhaustive oracle (small instances)")
    sp = sub.add_parser("simulate", parents=[common], help="run the pipeline simulator and audit it")
    sp.add_argument("--seeds", type=int, default=0, metavar="N", help="sweep N seeds starting at the seed")
    sp.add_argument("--no-timeline", action="store_true", help="omit the event timeline from report.json")
    gp = sub.add_parser("sig", parents=[common], help="shared input generation replay/evict/metrics")
    gp.add_argument("action", choices=("replay", "evict", "metrics"))
    gp.add_argument("--raw-field")
    gp.add_argument("--pipeline")
    gp.add_argument("--key")
    gp.add_argument("--ttl", type=float)
    gp.add_argument("--now", type=float, default=0.0)
    sub.add_parser("cost", parents=[common], help="SIG vs LIG cost report")
    return p


COMMANDS = {"partition": cmd_partition, "simulate": cmd_simulate, "sig": cmd_sig, "cost": cmd_cost}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        doc = scen.load(args.scenario)
        return COMMANDS[args.command](args, doc)
    except ScenarioError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidArgument, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
