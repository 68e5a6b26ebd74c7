"""Command-line entry point: ``crowdkg {reward-table,dp,simulate,replay}``."""

import argparse
import json
import sys
import time

from .beta import BetaState, reward_pair, scored_reward, transition_probs
from .errors import DomainError, NumericError, ValidationError
from .harness import ExperimentConfig, rows_to_csv, rows_to_json, run_experiment, write_rows
from .mdp import StateMatrix
from .policies import DEFAULT_STATE_CAP, dp_solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
DEFAULT_STATES = "3,1;2,2;2,1"


def _states(text):
    try:
        pairs = [tuple(float(x) for x in item.split(",")) for item in text.split(";") if item.strip()]
    except ValueError:
        raise ValidationError(f"states: expected 'a,b;a,b;...', got {text!r}") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ValidationError(f"states: expected 'a,b;a,b;...', got {text!r}")
    try:
        return StateMatrix.from_pairs(pairs)
    except DomainError as exc:
        raise ValidationError(f"states: {exc}") from None


def _list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def cmd_reward_table(args, out):
    S = _states(args.states)
    out.write("instance\ta\tb\tp1\tp2\tR1\tR2\tR\n")
    for i, (a, b) in enumerate(S.pairs()):
        s = BetaState(a, b)
        p1, p2 = transition_probs(s)
        r = reward_pair(s)
        R = scored_reward(s)
        out.write(f"{i}\t{a:g}\t{b:g}\t{p1!r}\t{p2!r}\t{r.r_pos!r}\t{r.r_neg!r}\t{R!r}\n")
    return EXIT_OK


def cmd_dp(args, out):
    S = _states(args.states)
    if args.budget < 0:
        raise ValidationError("budget: must be non-negative")
    t0 = time.perf_counter()
    sol = dp_solve(S, args.budget, args.cap)
    secs = time.perf_counter() - t0
    out.write(f"value\t{sol.value!r}\n")
    out.write(f"initial_accuracy\t{sol.initial_accuracy!r}\n")
    out.write(f"first_action\t{'NA' if sol.first_action is None else sol.first_action}\n")
    out.write(f"nodes\t{len(sol.table)}\n")
    if args.timing:
        out.write(f"seconds\t{secs:.6f}\n")
    return EXIT_OK


_CONFIG_KEYS = {
    "mode": "mode", "K": "K", "M": "M", "C": "C", "p": "p",
    "instance_prior": "instance_prior", "worker_prior": "worker_prior",
    "generator": "generator", "worker_generator": "worker_generator",
    "theta": "theta", "rho": "rho", "budgets": "budgets", "policies": "policies",
    "alpha": "alpha", "reps": "replications", "seed": "seed", "timing": "timing",
    "data": "data", "classes": "classes", "features": "features",
}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    return data


def build_config(args):
    """Merge the JSON config file (if any) with explicit command-line flags."""
    merged = dict(_load_config(args.config))
    for attr, key in _CONFIG_KEYS.items():
        value = getattr(args, attr, None)
        if value is None or value is False:
            continue
        if attr in ("budgets", "policies", "theta", "rho"):
            value = _list(value)
        merged[key] = value
    out_path = merged.pop("out", None)
    if getattr(args, "out", None) is not None:
        out_path = args.out
    traces = bool(merged.pop("traces", False) or getattr(args, "traces", False))
    return ExperimentConfig.from_dict(merged), out_path, traces


def cmd_run(args, out):
    cfg, out_path, traces = build_config(args)
    if args.command == "replay" and cfg.data is None:
        raise ValidationError("data: replay needs --data (or 'data' in the config)")
    if args.command == "simulate" and cfg.data is not None:
        raise ValidationError("data: use the replay subcommand for recorded labels")
    rows = run_experiment(cfg, keep_traces=traces)
    if out_path is None:
        out.write(rows_to_json(rows) + "\n" if traces else rows_to_csv(rows, cfg.timing))
    else:
        write_rows(rows, out_path, cfg.timing)
    return EXIT_OK


def _add_run_flags(p, replay):
    p.add_argument("--config", help="JSON file with configuration fields; flags override it")
    p.add_argument("--mode", help="binary, hetero, multiclass or contextual")
    p.add_argument("--budgets", help="comma-separated budgets; '5K' means 5 labels per instance")
    p.add_argument("--policies", help="comma-separated policies, e.g. optkg,kg-random,uniform,cvar:0.2")
    p.add_argument("--alpha", type=float, help="CVaR level for a bare 'cvar' policy")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--seed", type=int, help="base seed; replication r uses seed XOR r")
    p.add_argument("--instance-prior", dest="instance_prior", help="instance prior 'a,b'")
    p.add_argument("--worker-prior", dest="worker_prior", help="worker prior 'c,d'")
    p.add_argument("--out", help="output path (.csv or .json); stdout when omitted")
    p.add_argument("--timing", action="store_true", help="add a wall-clock micros column")
    p.add_argument("--traces", action="store_true", help="emit JSON rows with full label traces")
    if replay:
        p.add_argument("--data", help="replay CSV: instance_id,worker_id,label,true_label")
        p.add_argument("--classes", type=int, help="number of classes for labels 0..C-1")
        p.add_argument("--features", help="feature CSV: instance_id,f0,...")
    else:
        p.add_argument("--K", type=int, help="number of instances")
        p.add_argument("--M", type=int, help="number of workers")
        p.add_argument("--C", type=int, help="number of classes")
        p.add_argument("--p", type=int, help="feature dimension (contextual mode)")
        p.add_argument("--generator", help="Beta 'a,b' the soft labels are drawn from")
        p.add_argument("--worker-generator", dest="worker_generator", help="Beta 'c,d' for reliabilities")
        p.add_argument("--theta", help="comma-separated soft labels, overriding the generator")
        p.add_argument("--rho", help="comma-separated reliabilities, overriding the generator")


def make_parser():
    parser = argparse.ArgumentParser(prog="crowdkg", description="Budget allocation for crowd labeling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reward-table", help="transition probabilities and rewards per instance")
    p.add_argument("--states", default=DEFAULT_STATES, help="'a,b;a,b;...' (default %(default)s)")
    p.set_defaults(func=cmd_reward_table)

    p = sub.add_parser("dp", help="exact optimal policy for a small state matrix")
    p.add_argument("--states", default=DEFAULT_STATES, help="'a,b;a,b;...' (default %(default)s)")
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--cap", type=int, default=DEFAULT_STATE_CAP, help="state-space cap")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("simulate", help="synthetic experiments")
    _add_run_flags(p, replay=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="experiments on recorded labels")
    _add_run_flags(p, replay=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = make_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ValidationError, DomainError) as exc:
        print(f"crowdkg: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"crowdkg: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"crowdkg: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
