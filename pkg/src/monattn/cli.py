"""``monattn`` command line: train, decode, simulate, checkgrad, bench.

Every subcommand resolves its configuration from built-in defaults, then an
optional ``--config`` file of ``key = value`` lines, then explicit flags, and
prints the resolved configuration before doing any work.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
Logging goes to stderr; its level comes from ``MONATTN_LOG`` (quiet, info, debug).
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

from .attention import MonotonicConfig, monotonic_alpha_scan, recurrence_forward
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .estimator import DivergenceError
from .numkit import SeededRng
from .oracle import enumerate_alpha_exact, monte_carlo_alpha
from .task import generate_task, sample_pair
from .training import METRIC_FIELDS, TrainConfig, train_loop

log = logging.getLogger("monattn")

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
EXACT_MAX_T, EXACT_MAX_U = 8, 6


class UsageError(Exception):
    """Bad flags or config values; reported with exit code 2."""


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(",", " ").split()]


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


# name -> (type, default); the config file accepts the same keys
TRAIN_KEYS = {
    "seed": (int, 0),
    "out": (str, None),
    "metrics": (str, None),
    "steps": (int, 20000),
    "energy": (str, "modified"),
    "vocab_size": (int, 20),
    "task_seed": (int, 0),
    "min_len": (int, 5),
    "max_len": (int, 20),
    "embed_dim": (int, 32),
    "hidden_dim": (int, 64),
    "decoder_dim": (int, 64),
    "attention_dim": (int, 64),
    "learning_rate": (float, 1e-3),
    "clip_norm": (float, 2.0),
    "batch_size": (int, 16),
    "noise_std": (float, 1.0),
    "r_init": (float, -2.0),
    "denom_mode": (str, "clamped"),
    "eval_interval": (int, 500),
    "n_eval": (int, 100),
    "stop_accuracy": (_opt_float, None),
}
DECODE_KEYS = {
    "seed": (int, 0),
    "out": (str, None),
    "checkpoint": (str, None),
    "mode": (str, "hard"),
    "input": (str, None),
    "max_len": (int, None),
    "dump_alpha": (_bool, False),
}
SIMULATE_KEYS = {
    "seed": (int, 0),
    "out": (str, None),
    "T": (int, 6),
    "U": (int, 4),
    "instances": (int, 200),
    "p_min": (float, 0.05),
    "p_max": (float, 0.95),
    "tol": (float, 1e-9),
    "semantics": (str, "absorbing"),
    "report_gap": (_bool, False),
    "n_samples": (int, 100000),
}
CHECKGRAD_KEYS = {
    "seed": (int, 0),
    "out": (str, None),
    "op": (list, None),
    "h": (float, 1e-6),
    "tol": (float, 1e-5),
    "abs_tol": (float, 1e-4),
    "instances": (int, 50),
}
BENCH_KEYS = {
    "seed": (int, 0),
    "out": (str, None),
    "T": (_int_list, [50, 100, 200, 400]),
    "U": (_int_list, [50, 100, 200, 400, 1000]),
    "d": (int, 256),
    "trials": (int, 20),
    "warmup": (int, 2),
    "saturation": (str, "uniform"),
    "json": (_bool, False),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, hyphens in keys become underscores."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def resolve(keys: dict, flags: dict, config_path=None) -> dict:
    """Defaults, then the config file, then explicitly given flags."""
    resolved = {k: default for k, (_, default) in keys.items()}
    if config_path:
        for k, v in read_config_file(config_path).items():
            if k not in keys:
                raise UsageError(f"unknown config key {k!r}")
            kind = keys[k][0]
            try:
                resolved[k] = v.split() if kind is list else kind(v)
            except ValueError as exc:
                raise UsageError(f"bad value for {k!r}: {exc}") from None
    resolved.update({k: v for k, v in flags.items() if k in keys})
    return resolved


def echo_config(command, cfg, stream=None):
    stream = stream or sys.stdout
    print(f"# {command} config: " + json.dumps(cfg, sort_keys=True), file=stream)


# -- subcommands ---------------------------------------------------------


def cmd_train(cfg) -> int:
    if not cfg["out"]:
        raise UsageError("train requires --out (checkpoint path)")
    if cfg["energy"] not in ("modified", "dot"):
        raise UsageError("--energy must be 'modified' or 'dot'")
    try:
        tc = TrainConfig(
            vocab_size=cfg["vocab_size"], task_seed=cfg["task_seed"],
            len_range=(cfg["min_len"], cfg["max_len"]), energy=cfg["energy"],
            embed_dim=cfg["embed_dim"], hidden_dim=cfg["hidden_dim"],
            decoder_dim=cfg["decoder_dim"], attention_dim=cfg["attention_dim"],
            learning_rate=cfg["learning_rate"], clip_norm=cfg["clip_norm"],
            batch_size=cfg["batch_size"], max_steps=cfg["steps"], noise_std=cfg["noise_std"],
            r_init=cfg["r_init"], denom_mode=cfg["denom_mode"],
            eval_interval=cfg["eval_interval"], n_eval=cfg["n_eval"],
            stop_accuracy=cfg["stop_accuracy"], seed=cfg["seed"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg["out"])
    metrics_path = Path(cfg["metrics"]) if cfg["metrics"] else out.with_suffix(".metrics.csv")
    task = generate_task(tc.task_seed, tc.vocab_size)
    try:
        checkpoint, history = train_loop(task, tc)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    save_checkpoint(out, checkpoint)
    with metrics_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    final = history[-1]
    print("final " + " ".join(f"{k}={final[k]:.6g}" for k in METRIC_FIELDS))
    print(f"wrote {out} and {metrics_path}")
    return 0


def _parse_tokens(text):
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--input must be integer tokens, got {text!r}") from None


def cmd_decode(cfg) -> int:
    if cfg["mode"] not in ("hard", "soft"):
        raise UsageError("--mode must be 'hard' or 'soft'")
    if not cfg["checkpoint"]:
        raise UsageError("decode requires --checkpoint")
    try:
        ck = load_checkpoint(cfg["checkpoint"])
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    est = ck.to_estimator()
    if cfg["input"] is not None:
        x = _parse_tokens(cfg["input"])
        target = None
    else:
        x, target = sample_pair(ck.task, SeededRng(cfg["seed"], 12), ck.config.len_range)
    bad = [t for t in x if not 0 <= t < ck.task.vocab_size]
    if not x or bad:
        print(f"error: input tokens must be in [0, {ck.task.vocab_size})", file=sys.stderr)
        return 1
    result = est.decode(x, cfg["mode"], cfg["max_len"] or 2 * len(x) + 2)
    lines = ["input: " + " ".join(map(str, x))]
    if target is not None:
        lines.append("target: " + " ".join(map(str, target[:-1])))
    lines.append("output: " + " ".join(map(str, result.tokens)) + (" <eos>" if result.ended else ""))
    if cfg["dump_alpha"]:
        if cfg["mode"] == "soft":
            T = result.alphas.shape[1]
            lines.append("step," + ",".join(f"a{j}" for j in range(1, T + 1)))
            lines += [f"{i}," + ",".join(repr(float(a)) for a in row)
                      for i, row in enumerate(result.alphas, 1)]
        else:
            lines.append("step,selected")
            lines += [f"{i},{'' if s is None else s}" for i, s in enumerate(result.selected, 1)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    return 0


def cmd_simulate(cfg) -> int:
    T, U = cfg["T"], cfg["U"]
    if not (1 <= T <= EXACT_MAX_T and 1 <= U <= EXACT_MAX_U):
        raise UsageError(f"exact enumeration needs 1 <= T <= {EXACT_MAX_T} and 1 <= U <= {EXACT_MAX_U}")
    if cfg["semantics"] not in ("absorbing", "rescanning"):
        raise UsageError("--semantics must be 'absorbing' or 'rescanning'")
    if not 0 <= cfg["p_min"] <= cfg["p_max"] <= 1 or cfg["instances"] < 1:
        raise UsageError("need 0 <= p_min <= p_max <= 1 and instances >= 1")
    rng = SeededRng(cfg["seed"], 20)
    gen = rng.generator
    mcfg = MonotonicConfig()
    err_rec = err_scan = gap = 0.0
    for k in range(cfg["instances"]):
        t_k = int(gen.integers(1, T + 1))
        u_k = int(gen.integers(1, U + 1))
        p = gen.uniform(cfg["p_min"], cfg["p_max"], (u_k, t_k))
        exact = enumerate_alpha_exact(p).alpha
        a_rec = np.zeros((u_k, t_k))
        a_scan = np.zeros((u_k, t_k))
        prev_rec = prev_scan = np.eye(1, t_k)[0]
        for i in range(u_k):
            prev_rec = a_rec[i] = recurrence_forward(p[i], prev_rec)[0]
            prev_scan = a_scan[i] = monotonic_alpha_scan(p[i], prev_scan, mcfg)
        err_rec = max(err_rec, float(np.abs(a_rec - exact).max()))
        err_scan = max(err_scan, float(np.abs(a_scan - exact).max()))
        if cfg["report_gap"]:
            mc = monte_carlo_alpha(p, cfg["n_samples"], rng.spawn(1000 + k), cfg["semantics"])
            gap = max(gap, float(np.abs(mc.alpha - exact).max()))
    ok = err_rec < cfg["tol"] and err_scan < cfg["tol"]
    lines = [f"max |recurrence - exact| = {err_rec:.3e}", f"max |scan - exact| = {err_scan:.3e}"]
    if cfg["report_gap"]:
        lines.append(f"max |monte_carlo({cfg['semantics']}, n={cfg['n_samples']}) - exact(absorbing)| = {gap:.3e}")
    lines.append(f"{'PASS' if ok else 'FAIL'} at tol {cfg['tol']:g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    return 0 if ok else 1


def cmd_checkgrad(cfg) -> int:
    from .gradcheck import OPS, run_suite

    ops = cfg["op"]
    if ops:
        unknown = sorted(set(ops) - set(OPS))
        if unknown:
            raise UsageError(f"unknown op(s) {unknown}; choose from {sorted(OPS)}")
    if cfg["h"] <= 0 or cfg["instances"] < 1:
        raise UsageError("--h must be > 0 and --instances >= 1")
    results = run_suite(ops, n_instances=cfg["instances"], h=cfg["h"], rel_tol=cfg["tol"],
                        abs_tol=cfg["abs_tol"], seed=cfg["seed"])
    lines = []
    for name, report in results.items():
        lines.append(f"{name:<20} worst_rel_error={report.worst:.3e} {'pass' if report.passed else 'FAIL'}")
    ok = all(r.passed for r in results.values())
    lines.append(f"{'all ops pass' if ok else 'gradient check failed'} at rel_tol {cfg['tol']:g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
    return 0 if ok else 1


def cmd_bench(cfg) -> int:
    from . import speedbench as sb

    if not cfg["out"]:
        raise UsageError("bench requires --out (results path)")
    try:
        bc = sb.BenchConfig(T_values=cfg["T"], U_values=cfg["U"], d_h=cfg["d"], d_s=cfg["d"],
                            d_a=cfg["d"], trials=cfg["trials"], warmup=cfg["warmup"],
                            seed=cfg["seed"], saturation=cfg["saturation"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    def progress(cell):
        log.info("T=%d U=%d speedup %.2f (median %.2f)", cell.T, cell.U, cell.speedup,
                 cell.median_speedup)
    cells = sb.speedup_grid(bc, progress)
    meta = sb.metadata(bc)
    text = sb.grid_to_json(cells, meta) + "\n" if cfg["json"] else sb.grid_to_csv(cells, meta)
    try:
        sb.append_results(cfg["out"], text)
    except OSError as exc:
        print(f"error: cannot write {cfg['out']}: {exc.strerror}", file=sys.stderr)
        return 1
    speedups = [c.median_speedup for c in cells]
    print(f"cells={len(cells)} min_speedup={min(speedups):.3f} max_speedup={max(speedups):.3f} "
          f"(median of paired trials); wrote {cfg['out']}")
    return 0


COMMANDS = {
    "train": (cmd_train, TRAIN_KEYS),
    "decode": (cmd_decode, DECODE_KEYS),
    "simulate": (cmd_simulate, SIMULATE_KEYS),
    "checkgrad": (cmd_checkgrad, CHECKGRAD_KEYS),
    "bench": (cmd_bench, BENCH_KEYS),
}


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--config", help="file of 'key = value' lines; flags override it")
    common.add_argument("--out", help="output path")

    parser = argparse.ArgumentParser(prog="monattn", description="Monotonic attention toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], argument_default=S,
                       help="train the toy sequence-to-sequence model")
    p.add_argument("--steps", type=int)
    p.add_argument("--energy", choices=["modified", "dot"])
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    p.add_argument("--task-seed", type=int, dest="task_seed")
    p.add_argument("--learning-rate", "--lr", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--n-eval", type=int, dest="n_eval")
    p.add_argument("--stop-accuracy", type=float, dest="stop_accuracy")
    p.add_argument("--metrics", help="metrics CSV path (default: <out>.metrics.csv)")

    p = sub.add_parser("decode", parents=[common], argument_default=S,
                       help="decode with a trained checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--mode", choices=["hard", "soft"])
    p.add_argument("--input", help="input tokens, e.g. '3 1 4'; default: a sampled task pair")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--dump-alpha", action="store_true", dest="dump_alpha")

    p = sub.add_parser("simulate", parents=[common], argument_default=S,
                       help="compare recurrence and scan against exact enumeration")
    p.add_argument("--T", "-T", type=int, dest="T")
    p.add_argument("--U", "-U", type=int, dest="U")
    p.add_argument("--instances", type=int)
    p.add_argument("--p-min", type=float, dest="p_min")
    p.add_argument("--p-max", type=float, dest="p_max")
    p.add_argument("--tol", type=float)
    p.add_argument("--semantics", choices=["absorbing", "rescanning"])
    p.add_argument("--report-gap", action="store_true", dest="report_gap")
    p.add_argument("--n-samples", type=int, dest="n_samples")

    p = sub.add_parser("checkgrad", parents=[common], argument_default=S,
                       help="finite-difference gradient suite")
    p.add_argument("--op", action="append")
    p.add_argument("--h", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--abs-tol", type=float, dest="abs_tol")
    p.add_argument("--instances", type=int)

    p = sub.add_parser("bench", parents=[common], argument_default=S,
                       help="softmax vs hard monotonic timing grid")
    p.add_argument("--T", "-T", type=_int_list, dest="T", help="comma-separated memory lengths")
    p.add_argument("--U", "-U", type=_int_list, dest="U", help="comma-separated output lengths")
    p.add_argument("--d", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--saturation", choices=["uniform", "immediate"])
    p.add_argument("--json", action="store_true")
    return parser


def _setup_logging():
    level_name = os.environ.get("MONATTN_LOG", "info").strip().lower()
    if level_name not in LOG_LEVELS:
        raise UsageError(f"MONATTN_LOG must be one of {sorted(LOG_LEVELS)}, got {level_name!r}")
    log.setLevel(LOG_LEVELS[level_name])
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = vars(ns)
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    fn, keys = COMMANDS[command]
    try:
        _setup_logging()
        cfg = resolve(keys, flags, config_path)
        echo_config(command, cfg)
        return fn(cfg)
    except UsageError as exc:
        print(f"{parser.prog} {command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
