"""Command-line front end.

Subcommands: probs, simulate, reconstruct, compare, lock, oracle.  All
structured output is canonical JSON (sorted keys, fixed float repr) stamped
with the config hash, so reruns with the same config and seed are
byte-identical.  Exit codes: 0 success, 1 runtime/numerical failure,
2 bad usage or configuration.

The DGBS_WORKERS environment variable sets the process count for pattern
probability evaluation (default 1); results are assembled in pattern order,
so the worker count never changes the output bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import DgbsError, SchemaError
from .experiment import pid_lock, sample_patterns, simulate_records, \
    auto_select_pairs, build_error_signal, tune_pid_gains, \
    twofold_rates_from_state
from .fock import oracle_probability
from .hafnian import DetectionPattern
from .metrics import likelihood_ratio, tvd
from .probability import (ModelSpec, PatternDistribution, StateKernel,
                          all_patterns, distribution_from_kernel)
from .reconstruction import reconstruct, records_from_csv
from .serialize import (canonical_json, config_hash, drift_from_config,
                        load_config, phi_grid_from_config, pid_from_config,
                        pulses_from_config, source_from_config,
                        transfer_from_config)
from .states import build_classical_input, build_input_state, propagate


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("DGBS_WORKERS", "1")))
    except ValueError:
        return 1


_POOL_KERNEL = None


def _pool_init(kernel, model_label):
    global _POOL_KERNEL
    _POOL_KERNEL = (kernel, ModelSpec.parse(model_label))


def _pool_eval(pattern_counts):
    kernel, model = _POOL_KERNEL
    return kernel.pattern_probability(DetectionPattern(pattern_counts), model)


def _pattern_probs(kernel: StateKernel, patterns, model: ModelSpec) -> np.ndarray:
    workers = _workers()
    if workers == 1 or len(patterns) < 64:
        return np.array([kernel.pattern_probability(n, model) for n in patterns])
    with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                             initargs=(kernel, model.label())) as pool:
        vals = list(pool.map(_pool_eval, [n.counts for n in patterns],
                             chunksize=32))
    return np.array(vals)


def _write(text: str, out: str):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as f:
            f.write(text)


def _kernel_for_model(config: dict, model: ModelSpec) -> StateKernel:
    source = source_from_config(config)
    transfer = transfer_from_config(config)
    build = build_classical_input if model.kind == "classical" \
        else build_input_state
    return StateKernel.from_state(propagate(build(source, transfer.d), transfer))


def _model_arg(args) -> ModelSpec:
    model = ModelSpec.parse(args.model)
    if model.kind == "korder" and model.k is None:
        model = ModelSpec("korder", args.k)
    if args.k is not None and model.kind == "korder" and model.k != args.k:
        raise SchemaError("--k conflicts with the k embedded in --model")
    return model


# ---------------------------------------------------------------------------
# subcommands

def cmd_probs(args) -> int:
    config = load_config(args.config)
    model = _model_arg(args)
    kernel = _kernel_for_model(config, model)
    distributions = {}
    for total in range(1, args.n_max + 1):
        patterns = all_patterns(kernel.d, total,
                                collision_free=not args.collisions)
        if not patterns:
            continue
        raw = _pattern_probs(kernel, patterns, model)
        s = raw.sum()
        distributions[str(total)] = {
            "patterns": ["".join(str(c) for c in n.counts) for n in patterns],
            "probabilities": [float(v) for v in raw],
            "normalized": [float(v) for v in (raw / s if s > 0 else raw)],
        }
    payload = {
        "command": "probs",
        "version": __version__,
        "config_hash": config_hash(config),
        "model": model.label(),
        "p_vac": kernel.p_vac,
        "distributions": distributions,
    }
    _write(canonical_json(payload) + "\n", args.out)
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    source = source_from_config(config)
    transfer = transfer_from_config(config)
    records = simulate_records(
        source, transfer,
        second_input_port=config.get("second_input_port"),
        phi_grid=phi_grid_from_config(config),
        pulses_per_setting=pulses_from_config(config),
        seed=args.seed,
        include_collisions=bool(config.get("include_collisions", False)))
    from .reconstruction import records_to_csv
    header = f"# dgbs simulate config_hash={config_hash(config)} seed={args.seed}\n"
    _write(header + records_to_csv(records), args.out)
    return 0


def cmd_reconstruct(args) -> int:
    with open(args.records) as f:
        text = f.read()
    if text.startswith("#"):
        text = text.split("\n", 1)[1]
    records = records_from_csv(text)
    threefolds = None
    if args.threefolds:
        with open(args.threefolds) as f:
            obj = json.load(f)
        threefolds = PatternDistribution(
            obj["d"], obj["total"], obj["collision_free"],
            tuple(DetectionPattern(tuple(p)) for p in obj["patterns"]),
            np.asarray(obj["probabilities"], dtype=float),
            model=obj.get("model", "measured"))
    result = reconstruct(records, threefolds=threefolds, seed=args.seed)
    payload = json.loads(result.to_json())
    payload["command"] = "reconstruct"
    payload["version"] = __version__
    payload["seed"] = args.seed
    _write(canonical_json(payload) + "\n", args.out)
    return 0


def _read_samples(path: str, d: int):
    import csv as _csv
    with open(path) as f:
        rows = list(_csv.reader(line for line in f if not line.startswith("#")))
    if not rows or rows[0][:2] != ["pulse", "bitmask_hex"]:
        raise SchemaError("samples CSV must have header pulse,bitmask_hex,phi")
    samples = []
    for row in rows[1:]:
        if not row or row[1] == "discard":
            continue
        mask = int(row[1], 16)
        samples.append(DetectionPattern(tuple((mask >> i) & 1 for i in range(d))))
    return samples


def cmd_compare(args) -> int:
    config = load_config(args.config)
    model_a = _model_arg(args)
    model_b = ModelSpec.parse(args.model_b)
    kernel_a = _kernel_for_model(config, model_a)
    kernel_b = _kernel_for_model(config, model_b)
    tvds = {}
    for total in range(1, args.n_max + 1):
        try:
            da = distribution_from_kernel(kernel_a, total, True, model_a)
            db = distribution_from_kernel(kernel_b, total, True, model_b)
        except DgbsError:
            continue
        tvds[str(total)] = tvd(da, db)
    payload = {
        "command": "compare",
        "version": __version__,
        "config_hash": config_hash(config),
        "model_a": model_a.label(),
        "model_b": model_b.label(),
        "tvd_by_total": tvds,
    }
    if args.samples:
        samples = _read_samples(args.samples, kernel_a.d)
        samples = [s for s in samples if s.total >= args.min_photons]
        trace = likelihood_ratio(samples, model_a, model_b, kernel_a,
                                 state_or_kernel_b=kernel_b)
        payload["likelihood"] = {
            "samples": trace.sample_count,
            "log_ratio": trace.log_ratio,
            "ratio": trace.ratio,
            "flagged": len(trace.flagged),
        }
    _write(canonical_json(payload) + "\n", args.out)
    return 0


def cmd_lock(args) -> int:
    config = load_config(args.config)
    source = source_from_config(config)
    transfer = transfer_from_config(config)
    drift = drift_from_config(config)
    pairs = auto_select_pairs(source, transfer,
                              n_pairs=int(config.get("lock_pairs", 5)))
    signal = build_error_signal(twofold_rates_from_state(source, transfer), pairs)
    pid = pid_from_config(config)
    if pid is None:
        pid = tune_pid_gains(drift, signal, seed=args.seed)
    result = pid_lock(drift, pid, signal, duration=args.duration, seed=args.seed)
    stride = max(1, len(result.phi) // 600)
    payload = {
        "command": "lock",
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": args.seed,
        "duration": args.duration,
        "gains": {"kp": pid.kp, "ki": pid.ki, "kd": pid.kd},
        "setpoint": result.setpoint,
        "residual_std": result.residual_std,
        "diverged": result.diverged,
        "pairs": [[j, k, s] for j, k, s in pairs],
        "trace_times": [float(t) for t in result.times[::stride]],
        "trace_phi": [float(p) for p in result.phi[::stride]],
    }
    _write(canonical_json(payload) + "\n", args.out)
    return 0


def cmd_oracle(args) -> int:
    config = load_config(args.config)
    source = source_from_config(config)
    transfer = transfer_from_config(config)
    pattern = DetectionPattern(tuple(int(c) for c in args.pattern.split(",")))
    kernel = StateKernel.from_state(
        propagate(build_input_state(source, transfer.d), transfer))
    engine = kernel.pattern_probability(pattern)
    oracle = oracle_probability(source, transfer, pattern,
                                cutoff=args.cutoff)
    payload = {
        "command": "oracle",
        "version": __version__,
        "config_hash": config_hash(config),
        "pattern": list(pattern.counts),
        "engine": engine,
        "oracle": oracle,
        "abs_diff": abs(engine - oracle),
    }
    _write(canonical_json(payload) + "\n", args.out)
    return 0


def cmd_sample(args) -> int:
    config = load_config(args.config)
    model = _model_arg(args)
    kernel_state = propagate(
        build_input_state(source_from_config(config),
                          transfer_from_config(config).d),
        transfer_from_config(config))
    table = sample_patterns(kernel_state, model, args.pulses, args.n_max,
                            args.seed)
    header = f"# dgbs sample config_hash={config_hash(config)} seed={args.seed}\n"
    _write(header + table.to_csv(), args.out)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgbs",
        description="Displaced Gaussian boson sampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="-", help="output path (default stdout)")
        if model:
            p.add_argument("--model", default="full",
                           help="full | korder(k) | squeezer_only | classical")
            p.add_argument("--k", type=int, default=None,
                           help="truncation order for --model korder")

    p = sub.add_parser("probs", help="fixed-N pattern probability tables")
    common(p, model=True)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--collisions", action="store_true",
                   help="enumerate patterns with collisions too")
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("simulate", help="generate three-setting records CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="invert records to (B, C, gamma)")
    p.add_argument("--records", required=True, help="records CSV path")
    p.add_argument("--threefolds", default=None,
                   help="measured threefold distribution JSON for the "
                        "phase-completion optimizer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("compare", help="TVD / likelihood ratio between models")
    common(p, model=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--samples", default=None, help="samples CSV for L")
    p.add_argument("--min-photons", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("lock", help="simulate phase drift and PID locking")
    common(p)
    p.add_argument("--duration", type=float, default=60.0)
    p.set_defaults(func=cmd_lock)

    p = sub.add_parser("oracle", help="cross-check one pattern against the "
                                      "Fock-space oracle")
    common(p)
    p.add_argument("--pattern", required=True,
                   help="comma-separated counts, e.g. 1,0,1")
    p.add_argument("--cutoff", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sample", help="draw detection patterns")
    common(p, model=True)
    p.add_argument("--pulses", type=int, default=10000)
    p.add_argument("--n-max", type=int, default=4)
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"dgbs: config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"dgbs: {exc}", file=sys.stderr)
        return 2
    except DgbsError as exc:
        print(f"dgbs: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
