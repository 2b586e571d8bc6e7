"""Command-line surface: config-driven experiments with deterministic outputs.

Every command writes its tables/reports atomically under the output
directory and exits 0 only when all of its embedded acceptance flags
pass; the JSON summary names any failing flag.  Outputs are byte-stable:
fixed column orders, sorted JSON keys, shortest-roundtrip float formatting,
and all randomness keyed by ``derive_seed(base_seed, stream, index)``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .agent import expected_agent_utility, best_response
from .behavior_models import GAUSSIAN_SFT
from .config import RunConfig, load_config
from .contracts import BinaryContract, Method, pass_probability
from .estimation import loglog_slope, mle_rmse_sweep
from .golden_selection import (
    bucket_accuracy,
    group_gap_analysis,
    read_annotator_records,
    read_scored_samples,
    select_golden,
)
from .mechanism import (
    CalibrationError,
    ConfigurationError,
    calibrate_binary,
    clt_diagnostic,
    exponential_contrast,
    linear_rate_sweep,
    proposition1_diagnostic,
    rate_sweep,
    solve_first_best,
)
from .seeding import derive_seed

RATE_CSV_HEADER = "n,var_psi,var_scaled,gap,gap_scaled,theta_a,tau,p_pass,expected_wage"
CLT_CSV_HEADER = "n,ks_distance"


# ---------------------------------------------------------------------------
# deterministic emission helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _summarize(out_dir: Path, command: str, flags: dict[str, bool],
               payload: dict) -> int:
    failed = sorted(name for name, ok in flags.items() if not ok)
    summary = dict(payload)
    summary["command"] = command
    summary["flags"] = flags
    summary["failed"] = failed
    path = out_dir / f"{command.replace('-', '_')}.json"
    write_json(path, summary)
    print(path)
    for name in failed:
        print(f"FAIL {name}", file=sys.stderr)
    return 1 if failed else 0


def _ols_r2(x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _require_binary_contract(cfg: RunConfig) -> BinaryContract:
    if not isinstance(cfg.contract, BinaryContract):
        raise ConfigurationError("this command needs a binary contract block")
    return cfg.contract


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> int:
    contract = _require_binary_contract(cfg)
    n = int(cfg.sweep["n"])
    reps = int(cfg.sweep["reps"])
    seed = derive_seed(cfg.base_seed, "simulate")
    br = best_response(cfg.agent, cfg.model, contract, n)
    p_pass, _ = pass_probability(cfg.model, br.theta_a, contract, n)
    p_mc, se_mc = pass_probability(cfg.model, br.theta_a, contract, n,
                                   method=Method.MONTE_CARLO,
                                   reps=max(reps, 1000), seed=seed)
    var_psi = p_pass * (1.0 - p_pass)
    expected_wage = contract.w0 + contract.wb * p_pass
    agent_utility = expected_agent_utility(cfg.agent, cfg.model, contract,
                                           br.theta_a, n)
    principal_utility = float(cfg.principal.mu(br.theta_a)) - expected_wage
    flags = {"var_identity": abs(var_psi - p_pass * (1.0 - p_pass)) <= 1e-15}
    return _summarize(out_dir, "simulate", flags, {
        "n": n,
        "theta_a": br.theta_a,
        "foc_residual": br.foc_residual,
        "p_pass": p_pass,
        "p_pass_mc": p_mc,
        "p_pass_mc_std_err": se_mc,
        "var_psi": var_psi,
        "expected_wage": expected_wage,
        "utilities": {"agent": agent_utility, "principal": principal_utility},
        "seed": cfg.base_seed,
    })


def _ir_gap(cfg: RunConfig, contract: BinaryContract, theta: float, n: int) -> float:
    u = expected_agent_utility(cfg.agent, cfg.model, contract, theta, n)
    return u - cfg.agent.u0


def cmd_calibrate(cfg: RunConfig, out_dir: Path) -> int:
    n = int(cfg.sweep["n"])
    wb = float(cfg.sweep["wb"])
    reps = int(cfg.sweep["reps"])
    seed = derive_seed(cfg.base_seed, "calibrate")
    fb = solve_first_best(cfg.agent, cfg.principal, cfg.model.domain)
    flags = {}
    payload = {
        "n": n,
        "first_best": {"theta_star": fb.theta_star, "wage_star": fb.wage_star,
                       "value": fb.value},
        "seed": cfg.base_seed,
    }
    try:
        mech = calibrate_binary(cfg.agent, cfg.principal, cfg.model, n, wb,
                                reps=reps, seed=seed,
                                wage_floor=cfg.wage_floor,
                                wage_cap=cfg.wage_cap, first_best=fb)
    except CalibrationError as exc:
        flags["calibration_within_tolerance"] = False
        payload["error"] = str(exc)
        return _summarize(out_dir, "calibrate", flags, payload)
    ir_gap = _ir_gap(cfg, mech.contract, fb.theta_star, n)
    scale = math.sqrt(n * math.log(n))
    write_csv(out_dir / "calibrate.csv", RATE_CSV_HEADER,
              [(n, mech.var_psi, mech.var_psi * scale, mech.gap,
                mech.gap * scale, mech.theta_a, mech.contract.tau,
                mech.p_pass, mech.expected_wage)])
    flags["calibration_within_tolerance"] = abs(mech.theta_a - fb.theta_star) <= 1e-4
    flags["ir_binding"] = -1e-8 <= ir_gap <= 1e-6
    flags["gap_nonnegative"] = mech.gap >= -1e-8
    payload.update({
        "contract": {"tau": mech.contract.tau, "w0": mech.contract.w0,
                     "wb": mech.contract.wb,
                     "wage_floor": mech.contract.wage_floor,
                     "wage_cap": mech.contract.wage_cap},
        "theta_a": mech.theta_a,
        "p_pass": mech.p_pass,
        "var_psi": mech.var_psi,
        "expected_wage": mech.expected_wage,
        "second_best_value": mech.second_best_value,
        "gap": mech.gap,
        "ir_gap": ir_gap,
        "audit_theta_a": mech.audit_theta_a,
        "audit_jitter": mech.audit_jitter,
    })
    return _summarize(out_dir, "calibrate", flags, payload)


def cmd_rate_sweep(cfg: RunConfig, out_dir: Path) -> int:
    ns = [int(n) for n in cfg.sweep["ns"]]
    wb = float(cfg.sweep["wb"])
    reps = int(cfg.sweep["reps"])
    seed = derive_seed(cfg.base_seed, "rate_sweep")
    result = rate_sweep(cfg.agent, cfg.principal, cfg.model, ns, wb, reps=reps,
                        seed=seed, wage_floor=cfg.wage_floor,
                        wage_cap=cfg.wage_cap)
    write_csv(out_dir / "rate_sweep.csv", RATE_CSV_HEADER,
              [(r.n, r.var_psi, r.var_scaled, r.gap, r.gap_scaled, r.theta_a,
                r.tau, r.p_pass, r.expected_wage) for r in result.rows])

    # frozen-threshold comparison table (the classical large-deviation regime)
    fb = solve_first_best(cfg.agent, cfg.principal, cfg.model.domain)
    offset = float(cfg.sweep["contrast_offset"])
    contrast = exponential_contrast(cfg.model, fb.theta_star, ns, offset=offset)
    strategic_fail = {r.n: 1.0 - r.p_pass for r in result.rows}
    write_csv(out_dir / "exponential_contrast.csv",
              "n,p_fail_fixed,ln_p_fail_fixed,p_fail_strategic,ln_p_fail_strategic",
              [(n, p, lp, strategic_fail[n], math.log(strategic_fail[n]))
               for n, p, lp in contrast])

    fixed_slope, fixed_r2 = _ols_r2(ns, [lp for _, _, lp in contrast])
    band_limit = 3.0 if cfg.model.kind == GAUSSIAN_SFT else 4.0
    foc_scales = [math.sqrt(r.n) * (r.theta_a - r.tau) / math.sqrt(math.log(r.n))
                  for r in result.rows]
    flags = {
        "var_scaled_band": result.var_scaled_band <= band_limit,
        "var_slope": abs(result.var_slope + 1.0) <= 0.15,
        "foc_scale_band": all(0.8 <= s <= 1.8 for s in foc_scales),
        "gap_nonnegative": all(r.gap >= -1e-8 for r in result.rows),
        "contrast_fixed_decay": fixed_slope < 0.0 and fixed_r2 >= 0.99,
    }
    payload = {
        "ns": ns,
        "var_slope_vs_sqrt_nlogn": result.var_slope,
        "gap_slope_vs_sqrt_nlogn": result.gap_slope,
        "var_scaled_band": result.var_scaled_band,
        "foc_scales": foc_scales,
        "contrast_slope_per_n": fixed_slope,
        "contrast_r2": fixed_r2,
        "seed": cfg.base_seed,
    }
    return _summarize(out_dir, "rate-sweep", flags, payload)


def cmd_linear_sweep(cfg: RunConfig, out_dir: Path) -> int:
    ns = [int(n) for n in cfg.sweep["ns"]]
    wb = float(cfg.sweep["wb"])
    seed = derive_seed(cfg.base_seed, "linear_sweep")
    result = linear_rate_sweep(cfg.agent, cfg.principal, cfg.model, ns,
                               seed=seed, wage_floor=cfg.wage_floor,
                               wage_cap=cfg.wage_cap)
    write_csv(out_dir / "linear_sweep.csv", "n,gap", result.rows)
    binary_at_max = calibrate_binary(cfg.agent, cfg.principal, cfg.model,
                                     max(ns), wb, wage_floor=cfg.wage_floor,
                                     wage_cap=cfg.wage_cap)
    linear_gap_at_max = dict(result.rows)[max(ns)]
    flags = {
        "gap_slope": abs(result.gap_slope + 1.0) <= 0.1,
        "linear_below_binary_at_max": linear_gap_at_max < binary_at_max.gap,
    }
    payload = {
        "ns": ns,
        "gap_slope_vs_n": result.gap_slope,
        "linear_gap_at_max": linear_gap_at_max,
        "binary_gap_at_max": binary_at_max.gap,
        "seed": cfg.base_seed,
    }
    return _summarize(out_dir, "linear-sweep", flags, payload)


def cmd_prop1(cfg: RunConfig, out_dir: Path) -> int:
    ns = [int(n) for n in cfg.sweep["ns"]]
    wb = float(cfg.sweep["wb"])
    seed = derive_seed(cfg.base_seed, "prop1")
    rows = proposition1_diagnostic(cfg.agent, cfg.principal, cfg.model, ns, wb,
                                   seed=seed, wage_floor=cfg.wage_floor,
                                   wage_cap=cfg.wage_cap)
    write_csv(out_dir / "prop1.csv",
              "n,dist_sq,dist_sq_scaled,theta_a,value,converged",
              [(r.n, r.dist_sq, r.dist_sq_scaled, r.theta_a, r.value,
                r.converged) for r in rows])
    dist = [r.dist_sq for r in rows]
    scaled = [r.dist_sq_scaled for r in rows]
    slack = 1e-6
    flags = {
        "all_converged": all(r.converged for r in rows),
        "dist_sq_nonincreasing": all(dist[i + 1] <= dist[i] + slack
                                     for i in range(len(dist) - 1)),
        "scaled_band": max(scaled) / max(min(scaled), 1e-300) <= 5.0,
    }
    payload = {"ns": ns, "dist_sq": dist, "dist_sq_scaled": scaled,
               "seed": cfg.base_seed}
    return _summarize(out_dir, "prop1", flags, payload)


def cmd_clt(cfg: RunConfig, out_dir: Path) -> int:
    ns = [int(n) for n in cfg.sweep["clt_ns"]]
    reps = int(cfg.sweep["clt_reps"])
    theta = cfg.sweep_theta
    seed = derive_seed(cfg.base_seed, "clt")
    rows = clt_diagnostic(cfg.model, theta, ns, reps, seed)
    write_csv(out_dir / "clt.csv", CLT_CSV_HEADER, rows)
    ks = [k for _, k in rows]
    if cfg.model.kind == GAUSSIAN_SFT:
        critical = 1.36 / math.sqrt(reps)
        flags = {"ks_within_critical": all(k <= 2.0 * critical for k in ks)}
    else:
        scaled = [k * math.sqrt(n) for n, k in rows]
        flags = {"ks_scaled_band": max(scaled) / min(scaled) <= 5.0}
    payload = {"ns": ns, "reps": reps, "theta": theta,
               "ks_distances": ks, "seed": cfg.base_seed}
    return _summarize(out_dir, "clt", flags, payload)


def cmd_mle_check(cfg: RunConfig, out_dir: Path) -> int:
    ns = [int(n) for n in cfg.sweep["mle_ns"]]
    reps = int(cfg.sweep["mle_reps"])
    theta = cfg.sweep_theta
    seed = derive_seed(cfg.base_seed, "mle_check")
    rows = mle_rmse_sweep(cfg.model, theta, ns, reps, seed)
    write_csv(out_dir / "mle_check.csv", "n,rmse", rows)
    slope = loglog_slope([n for n, _ in rows], [r for _, r in rows])
    flags = {"rmse_slope": abs(slope + 0.5) <= 0.1}
    payload = {"ns": ns, "reps": reps, "theta": theta,
               "rmse_slope": slope, "seed": cfg.base_seed}
    return _summarize(out_dir, "mle-check", flags, payload)


def cmd_select_golden(cfg: RunConfig, out_dir: Path, args) -> int:
    samples = read_scored_samples(args.input)
    golden = select_golden(samples, args.n, min_certainty=args.min_certainty)
    write_json(out_dir / "golden_set.json",
               {"ids": golden.ids, "certainties": golden.certainties})
    print(out_dir / "golden_set.json")
    return 0


def cmd_bucket_accuracy(cfg: RunConfig, out_dir: Path, args) -> int:
    samples = read_scored_samples(args.input)
    fractions = [float(f) for f in args.fractions.split(",")]
    rows = bucket_accuracy(samples, fractions)
    write_csv(out_dir / "bucket_accuracy.csv", "fraction,accuracy,count,ties",
              [(r.fraction, r.accuracy, r.count, r.ties) for r in rows])
    write_json(out_dir / "bucket_accuracy.json",
               {"rows": [{"fraction": r.fraction, "accuracy": r.accuracy,
                          "count": r.count, "ties": r.ties} for r in rows]})
    print(out_dir / "bucket_accuracy.json")
    return 0


def cmd_analyze_annotators(cfg: RunConfig, out_dir: Path, args) -> int:
    records = read_annotator_records(args.input)
    reports = group_gap_analysis(records)
    obj = {cond: {
        "mean_acc_correct": rep.mean_acc_correct,
        "mean_acc_incorrect": rep.mean_acc_incorrect,
        "gap": rep.gap,
        "n_correct_group": rep.n_correct_group,
        "n_incorrect_group": rep.n_incorrect_group,
    } for cond, rep in reports.items()}
    write_json(out_dir / "annotator_analysis.json", obj)
    print(out_dir / "annotator_analysis.json")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="TOML run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="override the base seed")
    common.add_argument("--out", type=str, default=None,
                        help="output directory (default from config io.out_dir)")
    common.add_argument("--set", action="append", default=[], metavar="K=V",
                        dest="overrides",
                        help="override a config key, e.g. --set sweep.reps=5000")

    parser = argparse.ArgumentParser(
        prog="annotation-incentives",
        description="Golden-question incentive mechanism simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common])
    sub.add_parser("calibrate", parents=[common])
    sub.add_parser("rate-sweep", parents=[common])
    sub.add_parser("linear-sweep", parents=[common])
    sub.add_parser("prop1", parents=[common])
    sub.add_parser("clt", parents=[common])
    sub.add_parser("mle-check", parents=[common])

    p = sub.add_parser("select-golden", parents=[common])
    p.add_argument("--input", required=True, help="scored samples CSV/JSONL")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--min-certainty", type=float, default=0.0)

    p = sub.add_parser("bucket-accuracy", parents=[common])
    p.add_argument("--input", required=True)
    p.add_argument("--fractions", default="0.1,0.5,1.0")

    p = sub.add_parser("analyze-annotators", parents=[common])
    p.add_argument("--input", required=True)
    return parser


_SIMPLE_COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "rate-sweep": cmd_rate_sweep,
    "linear-sweep": cmd_linear_sweep,
    "prop1": cmd_prop1,
    "clt": cmd_clt,
    "mle-check": cmd_mle_check,
}

_DATA_COMMANDS = {
    "select-golden": cmd_select_golden,
    "bucket-accuracy": cmd_bucket_accuracy,
    "analyze-annotators": cmd_analyze_annotators,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=args.overrides, seed=args.seed,
                          out_dir=args.out)
        out_dir = Path(cfg.out_dir)
        if args.command in _SIMPLE_COMMANDS:
            return _SIMPLE_COMMANDS[args.command](cfg, out_dir)
        return _DATA_COMMANDS[args.command](cfg, out_dir, args)
    except (ConfigurationError, CalibrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
