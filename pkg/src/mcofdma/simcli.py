"""Command-line experiment runner.

Usage::

    mcofdma run config.json [--seed S] [--drops N] [--out DIR] [--jobs J]
    mcofdma compare config.json [...]

A ``run`` config names one algorithm::

    {"scenario": {"Q": 3, "K": 12, "M": 24, "seed": 7},
     "algorithm": "assign_centralized",
     "params": {"levels": [1.0, 0.5, 0.25]},
     "drops": 20,
     "output_path": "out"}

A ``compare`` config lists several under ``"algorithms"``, each an object
with ``"algorithm"``, optional ``"params"`` and optional ``"label"``. Every
algorithm sees the same drops.

Output: ``<out>/results.csv`` with one row per (drop, algorithm) and
``<out>/summary.csv`` with the mean and sample standard deviation of each
metric per algorithm. Columns are listed in ``RESULT_COLUMNS`` and
``SUMMARY_COLUMNS``; floats carry 9 significant digits.

Exit codes: 0 success, 2 configuration error, 3 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .assignment import centralized_assign, distributed_assign, rates_from_plan
from .dual_sched import DualSchedConfig, DualState, default_power_grid, run_dual_scheduler
from .errors import ConfigurationError, EnumerationCapError
from .layered_ra import LayeredPolicy, random_allocate, run_layered, uniform_requirement
from .metrics import MetricsReport, SlotAllocation, evaluate, jain
from .powerplan import build_plan, default_levels, plan_power_matrix
from .radio import SinrTarget
from .scenario import ScenarioConfig, channel_stream, generate_scenario

RESULT_COLUMNS = ["drop_id", "algorithm", "sum_rate", "jain_index", "total_power",
                  "max_cell_power", "outage_fraction", "iterations", "wasted_power"]
SUMMARY_COLUMNS = ["algorithm", "drops",
                   "sum_rate_mean", "sum_rate_std", "jain_mean", "jain_std",
                   "power_mean", "power_std", "outage_mean", "outage_std"]

_LAYERED = {"eta0": 2.0, "channels_per_user": 2, "max_sweeps": 20, "rho": 0.9,
            "max_load_reductions": 10, "use_switch_off": True,
            "pc_tol": 1e-8, "pc_max_iter": 500}
_PLAN = {"levels": None, "tags": None}
_DUAL = {"phi": None, "P_bar": None, "N": 200, "power_grid": None, "beta": 0.01,
         "delta_lambda": 0.05, "delta_mu": 0.05, "epsilon": 1e-6, "enum_cap": 10**6}

ALGORITHMS = {
    "layered": dict(_LAYERED),
    "layered_minfb": dict(_LAYERED, n_best=None, I_worst=None),
    "random": {"eta0": 2.0, "channels_per_user": 2, "pc_tol": 1e-8, "pc_max_iter": 500,
               "tags": None},
    "assign_centralized": dict(_PLAN),
    "assign_distributed": dict(_PLAN, i_flat="average"),
    "dual_exhaustive": dict(_DUAL),
    "dual_opportunistic": dict(_DUAL, **_PLAN),
}

_TOP_RUN = {"scenario", "algorithm", "params", "drops", "output_path"}
_TOP_COMPARE = {"scenario", "algorithms", "drops", "output_path"}


# ---------------------------------------------------------------- config

def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where} must be a JSON object", key=where)
    for key in obj:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {key!r} in {where}", key=key)


def parse_scenario(obj) -> ScenarioConfig:
    names = {f.name for f in fields(ScenarioConfig)}
    _check_keys(obj, names, "scenario")
    for key in ("Q", "K", "M"):
        if key not in obj:
            raise ConfigurationError(f"scenario is missing {key!r}", key=key)
    return ScenarioConfig(**obj)


def parse_algorithm(entry, where="algorithm"):
    """Return ``(label, name, params)`` with defaults filled in."""
    name = entry.get("algorithm")
    if name not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {name!r}", key="algorithm")
    params = entry.get("params", {})
    _check_keys(params, ALGORITHMS[name], f"params of {name}")
    merged = dict(ALGORITHMS[name])
    merged.update(params)
    return entry.get("label", name), name, merged


def load_experiment(path, command: str, *, seed=None, drops=None, out=None):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}", key="config") from exc
    if command == "run":
        _check_keys(doc, _TOP_RUN, "config")
        if "algorithm" not in doc:
            raise ConfigurationError("config is missing 'algorithm'", key="algorithm")
        entries = [{"algorithm": doc["algorithm"], "params": doc.get("params", {})}]
    else:
        _check_keys(doc, _TOP_COMPARE, "config")
        entries = doc.get("algorithms")
        if not isinstance(entries, list) or len(entries) < 2:
            raise ConfigurationError("compare needs at least two entries in 'algorithms'",
                                     key="algorithms")
        for e in entries:
            _check_keys(e, {"algorithm", "params", "label"}, "algorithms entry")
    scenario_obj = dict(doc.get("scenario", {}))
    if seed is not None:
        scenario_obj["seed"] = seed
    scenario = parse_scenario(scenario_obj)
    algos = [parse_algorithm(e) for e in entries]
    labels = [a[0] for a in algos]
    if len(set(labels)) != len(labels):
        raise ConfigurationError("algorithm labels must be unique", key="label")
    n_drops = doc.get("drops", 1) if drops is None else drops
    if isinstance(n_drops, bool) or not isinstance(n_drops, int) or n_drops < 1:
        raise ConfigurationError("drops must be an integer >= 1", key="drops")
    output = out if out is not None else doc.get("output_path", "results")
    for _, name, params in algos:
        _validate(scenario, name, params)
    return scenario, algos, n_drops, Path(output)


def _plan(scenario: ScenarioConfig, params):
    levels = params["levels"]
    if levels is None:
        levels = default_levels(scenario.Q, scenario.p_max)
    return build_plan(scenario.Q, scenario.M, levels, params["tags"], p_max=scenario.p_max)


def _dual_config(scenario: ScenarioConfig, name, params) -> DualSchedConfig:
    K, Q, M = scenario.K, scenario.Q, scenario.M
    phi = np.full(K, 1.0 / K) if params["phi"] is None else params["phi"]
    P_bar = 0.5 * M * scenario.p_max if params["P_bar"] is None else params["P_bar"]
    grid = default_power_grid(scenario.p_max) if params["power_grid"] is None \
        else params["power_grid"]
    if len(np.atleast_1d(phi)) != K:
        raise ConfigurationError(f"phi needs {K} entries", key="phi")
    if np.max(grid) > scenario.p_max:
        raise ConfigurationError("power_grid may not exceed p_max", key="power_grid")
    V = None
    mode = "exhaustive"
    if name == "dual_opportunistic":
        V = plan_power_matrix(_plan(scenario, params))
        mode = "opportunistic"
    return DualSchedConfig(phi=phi, P_bar=P_bar, N=params["N"], power_grid=grid,
                           selection_mode=mode, V=V, beta=params["beta"],
                           enum_cap=params["enum_cap"])


def _validate(scenario, name, params):
    try:
        if name in ("assign_centralized", "assign_distributed", "dual_opportunistic"):
            _plan(scenario, params)
        if name.startswith("dual"):
            _dual_config(scenario, name, params)
            DualState.initial(scenario.Q, scenario.K, epsilon=params["epsilon"],
                              delta_lambda=params["delta_lambda"],
                              delta_mu=params["delta_mu"])
        if name in ("layered", "layered_minfb", "random"):
            SinrTarget(params["eta0"])
            if int(params["channels_per_user"]) < 0:
                raise ConfigurationError("channels_per_user must be >= 0",
                                         key="channels_per_user")
        if name == "random" and scenario.M % scenario.Q:
            raise ConfigurationError("random allocation needs M divisible by Q", key="M")
        if name == "layered_minfb" and params["n_best"] is not None \
                and not 1 <= params["n_best"] <= scenario.M:
            raise ConfigurationError("n_best must lie in 1..M", key="n_best")
        if name in ("layered", "layered_minfb"):
            LayeredPolicy(max_sweeps=params["max_sweeps"], rho=params["rho"])
            if not 0 < params["rho"] < 1:
                raise ConfigurationError("rho must lie in (0, 1)", key="rho")
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid parameters for {name}: {exc}", key=name) from exc


# ------------------------------------------------------------- execution

def run_algorithm(scenario: ScenarioConfig, name: str, params: dict, drop_id: int
                  ) -> MetricsReport:
    """Run one algorithm on one drop and evaluate its delivered metrics."""
    if name.startswith("dual"):
        return _run_dual(scenario, name, params, drop_id)
    ch = generate_scenario(scenario, drop_id)
    if name in ("layered", "layered_minfb"):
        n_best = params.get("n_best")
        if name == "layered_minfb" and n_best is None:
            n_best = max(1, ch.M // 4)
        policy = LayeredPolicy(
            max_sweeps=params["max_sweeps"], rho=params["rho"],
            max_load_reductions=params["max_load_reductions"],
            use_switch_off=params["use_switch_off"], n_best=n_best,
            I_worst=params.get("I_worst"), pc_tol=params["pc_tol"],
            pc_max_iter=params["pc_max_iter"])
        target = SinrTarget(params["eta0"])
        req = uniform_requirement(ch, int(params["channels_per_user"]), target.eta0)
        outcome = run_layered(ch, req, target, scenario.p_max, policy)
        report = evaluate(ch, outcome.allocations)
        report.sweeps_or_slots_used = outcome.sweeps
        return report
    if name == "random":
        target = SinrTarget(params["eta0"])
        req = uniform_requirement(ch, int(params["channels_per_user"]), target.eta0)
        allocs, _ = random_allocate(ch, req, target, scenario.p_max, drop_id,
                                    tags=params["tags"], tol=params["pc_tol"],
                                    max_iter=params["pc_max_iter"])
        return evaluate(ch, allocs)
    p = plan_power_matrix(_plan(scenario, params))
    if name == "assign_centralized":
        result = centralized_assign(rates_from_plan(ch, p))
    else:
        mode = params["i_flat"]
        result = distributed_assign(ch, p, None if mode == "average" else float(mode))
    u = result.user_matrix()
    return evaluate(ch, SlotAllocation(u=u, p=np.where(u >= 0, p, 0.0)))


def _run_dual(scenario, name, params, drop_id):
    config = _dual_config(scenario, name, params)
    state = DualState.initial(scenario.Q, scenario.K, epsilon=params["epsilon"],
                              delta_lambda=params["delta_lambda"], delta_mu=params["delta_mu"])
    run = run_dual_scheduler(config, channel_stream(scenario, drop_id, config.N), state,
                             keep_trace=False)
    per_user = scenario.B * run.mean_rate
    return MetricsReport(sum_rate=float(per_user.sum()), per_user_rate=per_user,
                         jain_index=jain(per_user), per_cell_power=run.mean_power,
                         outage_fraction=run.outage_fraction, sweeps_or_slots_used=run.slots,
                         extra={"avg_power": run.avg_power, "rate_share": run.rate_share})


def _drop_rows(scenario, algos, drop_id):
    rows = []
    for label, name, params in algos:
        r = run_algorithm(scenario, name, params, drop_id)
        rows.append({
            "drop_id": drop_id, "algorithm": label, "sum_rate": r.sum_rate,
            "jain_index": r.jain_index, "total_power": r.total_power,
            "max_cell_power": float(np.max(r.per_cell_power)),
            "outage_fraction": r.outage_fraction, "iterations": r.sweeps_or_slots_used,
            "wasted_power": r.duplicates_wasted_power,
        })
    return rows


def _drop_rows_star(args):
    return _drop_rows(*args)


def execute(scenario, algos, drops: int, jobs: int = 1):
    """Rows for drops ``0..drops-1``, ordered by drop then algorithm."""
    tasks = [(scenario, algos, d) for d in range(drops)]
    if jobs > 1 and drops > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_drop = list(pool.map(_drop_rows_star, tasks))
    else:
        per_drop = [_drop_rows_star(t) for t in tasks]
    return [row for rows in per_drop for row in rows]


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def summarize(rows, algos):
    out = []
    for label, _, _ in algos:
        sel = [r for r in rows if r["algorithm"] == label]
        stats = {"algorithm": label, "drops": len(sel)}
        for col, key in (("sum_rate", "sum_rate"), ("jain", "jain_index"),
                         ("power", "total_power"), ("outage", "outage_fraction")):
            x = np.array([r[key] for r in sel], dtype=float)
            stats[f"{col}_mean"] = float(x.mean())
            stats[f"{col}_std"] = float(x.std(ddof=1)) if len(x) > 1 else 0.0
        out.append(stats)
    return out


def write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcofdma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, text in (("run", "run one algorithm over Monte-Carlo drops"),
                      ("compare", "run several algorithms on identical drops")):
        p = sub.add_parser(cmd, help=text)
        p.add_argument("config", help="JSON experiment file")
        p.add_argument("--seed", type=int, help="override scenario.seed")
        p.add_argument("--drops", type=int, help="override the number of drops")
        p.add_argument("--out", help="output directory (overrides output_path)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for drops")
    args = parser.parse_args(argv)
    try:
        scenario, algos, drops, out = load_experiment(
            args.config, args.command, seed=args.seed, drops=args.drops, out=args.out)
        rows = execute(scenario, algos, drops, max(1, args.jobs))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EnumerationCapError as exc:
        print(f"enumeration cap exceeded: {exc}", file=sys.stderr)
        return 3
    summary = summarize(rows, algos)
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for s in summary:
        print(f"{s['algorithm']:>20}  sum_rate {s['sum_rate_mean']:.4g} "
              f"(sd {s['sum_rate_std']:.3g})  jain {s['jain_mean']:.3f}  "
              f"power {s['power_mean']:.4g} W  outage {s['outage_mean']:.3g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
