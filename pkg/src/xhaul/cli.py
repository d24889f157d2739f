"""Command-line entry point: ``xhaul run|sweep|budget|check``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, ScenarioError, parse_scenario, replicate_seed
from .hfc import CSV_FIELDS as HFC_FIELDS, HfcScenario, run_hfc
from .interleaver import InterleaveConfig, is_stable, simulate_interleaving
from .linkbudget import (FronthaulParams, baseband_rate, budget_table, freq_domain_rate,
                         inflation_factor, passband_rate)
from .orchestrator import flows, optimize_grants, static_equal_grants
from .simcore import RNG_ALGORITHM
from .smgw import SchedulerConfig, run_gateway_cycle
from .traffic import TwoStateBurstParams

log = logging.getLogger("xhaul")

COLUMNS = {
    "smgw": ("replicate", "seed", "mode", "light_load_mbps", "heavy_load_mbps", "light_tput_mbps",
             "heavy_tput_mbps", "light_tput_ci_mbps", "heavy_tput_ci_mbps", "light_delay_ms",
             "heavy_delay_ms", "fairness", "converged"),
    "orchestrator": ("replicate", "seed", "preset", "R_mbps", "mode", "sharing", "gateway", "operator",
                     "request_mbps", "constraint_mbps", "grant_mbps", "flow_mbps"),
    "interleave": ("replicate", "seed", "beta", "T_L_us", "T_D_us", "tau_L_us", "tau_D_us", "theta_us",
                   "analytic_stable", "sim_unstable", "utilization", "busy_fraction", "avg_wait_lte_us",
                   "avg_wait_docsis_us", "stable"),
    "linkbudget": ("replicate", "seed", "channel", "cached_symbols", "overhead_pct", "memory_bits"),
    "hfc": ("replicate", "seed") + HFC_FIELDS,
}


def _smgw(p, horizon, warmup, seed):
    loads = [p["light_load"]] * p["num_light"] + [p["heavy_load"]] * p["num_heavy"]
    cfg = SchedulerConfig(p["uplink_rate"], p["cycle"], len(loads))
    burst = TwoStateBurstParams(0.0, p["sojourn_lo"], p["sojourn_hi"], p["p_switch_from_low"],
                                p["p_switch_from_heavy"], p["rate_ratio"], p["packet_bytes"] * 8,
                                p["packet_size_dist"])
    r = run_gateway_cycle(p["mode"], loads, cfg, horizon, seed, warmup, p["batches"], burst,
                          p["enb_buffer_bytes"] * 8, p["gateway_buffer_bytes"] * 8)

    def ci(key):
        acc = r.stats.get(key)
        return acc.ci_halfwidth() / 1e6 if acc else math.nan

    tput_keys = [k for k in r.stats if k.endswith("_throughput")]
    return [{
        "mode": p["mode"], "light_load_mbps": p["light_load"] / 1e6, "heavy_load_mbps": p["heavy_load"] / 1e6,
        "light_tput_mbps": r.class_throughput("light") / 1e6, "heavy_tput_mbps": r.class_throughput("heavy") / 1e6,
        "light_tput_ci_mbps": ci("light_throughput"), "heavy_tput_ci_mbps": ci("heavy_throughput"),
        "light_delay_ms": r.class_delay("light") * 1e3, "heavy_delay_ms": r.class_delay("heavy") * 1e3,
        "fairness": r.fairness, "converged": all(r.stats[k].converged() for k in tput_keys),
    }]


def orchestrator_inputs(p):
    R = p["R"]
    if p["preset"] == "opti1":
        return np.array([[2 * R, 50e6], [R, 50e6]]), np.array([100e6, 100e6])
    if p["preset"] == "roam2":
        return np.array([[R, 0.0], [20e6, 20e6]]), np.array([50e6, 50e6])
    return np.asarray(p["requests"], dtype=float), np.asarray(p["constraints"], dtype=float)


def _orchestrator(p, horizon, warmup, seed):
    R, K = orchestrator_inputs(p)
    if p["mode"] == "static_equal":
        G = static_equal_grants(R, K)
    else:
        G, _ = optimize_grants(R, K, sharing=p["sharing"])
    X = flows(R, G)
    rows = []
    for s in range(R.shape[0]):
        for o in range(R.shape[1]):
            rows.append({"preset": p["preset"], "R_mbps": p["R"] / 1e6, "mode": p["mode"], "sharing": p["sharing"],
                         "gateway": s + 1, "operator": o + 1, "request_mbps": R[s, o] / 1e6,
                         "constraint_mbps": K[o] / 1e6, "grant_mbps": G[s, o] / 1e6, "flow_mbps": X[s, o] / 1e6})
    return rows


def _interleave(p, horizon, warmup, seed):
    tau_D = p["tau_D"] if p["tau_D"] is not None else p["beta"] * p["T_L"]
    row = {"beta": p["beta"] if p["beta"] is not None else p["tau_L"] / tau_D if tau_D else math.inf,
           "T_L_us": p["T_L"] * 1e6, "T_D_us": p["T_D"] * 1e6, "tau_L_us": p["tau_L"] * 1e6,
           "tau_D_us": tau_D * 1e6, "theta_us": p["guard"] * 1e6}
    if tau_D >= p["T_D"]:
        # the job outlasts its own symbol period: nothing to simulate
        row.update(analytic_stable=False, sim_unstable=True, utilization=math.nan, busy_fraction=math.nan,
                   avg_wait_lte_us=math.nan, avg_wait_docsis_us=math.nan, stable=False)
        return [row]
    cfg = InterleaveConfig.from_values(p["T_L"], p["T_D"], p["tau_L"], tau_D, p["guard"], p["offset"])
    row["analytic_stable"] = bool(is_stable(cfg))
    st = simulate_interleaving(cfg, horizon)
    row.update(sim_unstable=st.unstable, utilization=st.utilization, busy_fraction=st.busy_fraction,
               avg_wait_lte_us=st.avg_wait[cfg.tech_a.name] * 1e6,
               avg_wait_docsis_us=st.avg_wait[cfg.tech_b.name] * 1e6,
               stable=not st.unstable)
    return [row]


def _linkbudget(p, horizon, warmup, seed):
    rows = budget_table(p["subcarriers"], p["bits_per_component"], p["docsis_total_subc"], p["docsis_guard"],
                        p["docsis_cont"], p["docsis_scat"], p["allocated_fraction"])
    return [{"channel": b.channel, "cached_symbols": b.cached_symbol_count,
             "overhead_pct": b.overhead_fraction * 100, "memory_bits": b.memory_bits} for b in rows]


def _hfc(p, horizon, warmup, seed):
    scn = HfcScenario(**p)
    return [run_hfc(scn, horizon, seed, warmup).csv_row()]


RUNNERS = {"smgw": _smgw, "orchestrator": _orchestrator, "interleave": _interleave,
           "linkbudget": _linkbudget, "hfc": _hfc}


def _task(args):
    kind, params, horizon, warmup, rep, seed = args
    rows = RUNNERS[kind](params, horizon, warmup, seed)
    return [{"replicate": rep, "seed": seed, **r} for r in rows]


def run_config(cfg: ScenarioConfig, workers: int = 1) -> list[dict]:
    """All rows for every (sweep point, replication), in sweep order."""
    tasks = []
    for params in cfg.points():
        for rep in range(cfg.replications):
            tasks.append((cfg.experiment, params, cfg.horizon, cfg.warmup, rep, replicate_seed(cfg.seed, rep)))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(kind: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = COLUMNS[kind]
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, np.integer):
        return int(v)
    return v


def manifest(cfg: ScenarioConfig) -> dict:
    return {
        "manifest": 1,
        "tool": "xhaul",
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "replicate_seeds": [replicate_seed(cfg.seed, i) for i in range(cfg.replications)],
        "config": cfg.to_dict(),
    }


def write_outputs(cfg: ScenarioConfig, rows, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(cfg.experiment, rows))
    clean = [{c: _json_safe(r[c]) for c in COLUMNS[cfg.experiment]} for r in rows]
    (out / "results.json").write_text(json.dumps(clean, indent=1) + "\n")
    (out / "manifest.json").write_text(json.dumps(manifest(cfg), indent=1, sort_keys=True) + "\n")
    return out


def _load(path, args) -> ScenarioConfig:
    cfg = parse_scenario(Path(path).read_text())
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "replications", None):
        cfg.replications = args.replications
    return cfg


def budget_text(p: FronthaulParams = FronthaulParams()) -> str:
    lines = [
        f"passband I/Q rate      {passband_rate(p) / 1e9:8.2f} Gb/s",
        f"baseband I/Q rate      {baseband_rate(p) / 1e9:8.3f} Gb/s",
        f"freq-domain I/Q rate   {freq_domain_rate(p) / 1e6:8.1f} Mb/s",
        f"R-FFT inflation factor {inflation_factor():8.3f}",
        "",
        f"{'channel':<14}{'symbols':>9}{'overhead %':>12}{'memory bits':>13}",
    ]
    for b in budget_table(p.subcarriers_used, p.bits_per_component):
        lines.append(f"{b.channel:<14}{b.cached_symbol_count:>9}{b.overhead_fraction * 100:>12.4f}{b.memory_bits:>13}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="xhaul", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "sweep", "check"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--seed", type=int)
        if name != "check":
            sp.add_argument("--out")
            sp.add_argument("--replications", type=int)
            sp.add_argument("--workers", type=int, default=1)
    bp = sub.add_parser("budget")
    bp.add_argument("--subcarriers", type=int, default=1200)
    bp.add_argument("--bits", type=int, default=10)
    bp.add_argument("--out")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")

    if args.cmd == "budget":
        text = budget_text(FronthaulParams(subcarriers_used=args.subcarriers, bits_per_component=args.bits))
        if args.out:
            Path(args.out).write_text(text)
        sys.stdout.write(text)
        return 0
    try:
        cfg = _load(args.config, args)
    except ScenarioError as e:
        for msg in e.errors:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.cmd == "check":
        n = len(cfg.points())
        print(f"ok: {cfg.experiment}, {n} sweep point(s) x {cfg.replications} replication(s)")
        return 0
    if args.cmd == "sweep" and not cfg.sweep:
        print("error: sweep needs at least one sweep axis in the config", file=sys.stderr)
        return 2
    rows = run_config(cfg, args.workers)
    out = args.out or cfg.output
    if out:
        write_outputs(cfg, rows, out)
        log.info("wrote %d rows to %s", len(rows), out)
    else:
        sys.stdout.write(rows_to_csv(cfg.experiment, rows))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
