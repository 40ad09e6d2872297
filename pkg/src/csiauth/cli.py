"""Command-line entry points.

    csiauth gen-data --config cfg.yaml --out data/
    csiauth train    --config cfg.yaml --scheme gdm --data data/train.npz --out ckpt.npz
    csiauth eval     --config cfg.yaml --ckpt ckpt.npz --data data/ --snr 10
    csiauth sweep    --config cfg.yaml [--out runs/exp]
    csiauth latency  --ckpt ckpt.npz --data data/test.npz [--trials 10]
    csiauth report   --run runs/exp

Every parameter lives in one YAML/JSON config file (sections: scenario,
plan, denoiser, train.<scheme>); flags override file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .auth import calibrate_from_distances, distance_array, summarize_cell
from .bundle import load_bundle, save_bundle
from .config import (DenoiserSpec, ExperimentPlan, ScenarioConfig, TrainConfig,
                     load_config)
from .harness import (SweepRunner, default_train_cfgs, emit_report,
                      estimate_energy, measure_latency, reports_from_cells,
                      run_sweep)
from .predictors import load_predictor, train_predictor
from .scenario import generate_pair_sequence

PAPER_REFERENCE_LATENCY_MS = 180.6  # reported on an RTX A6000; reference only


def _load_sections(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return {"scenario": ScenarioConfig(), "plan": ExperimentPlan(),
            "denoiser": DenoiserSpec(), "train": default_train_cfgs()}


def cmd_gen_data(args) -> int:
    sections = _load_sections(args)
    scenario = sections["scenario"]
    bundles = generate_pair_sequence(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, bundle in bundles.items():
        path = save_bundle(bundle, out / f"{split}.npz")
        print(f"wrote {path} ({bundle.n_pairs} pairs, {bundle.n_eve} eve samples)")
    return 0


def cmd_train(args) -> int:
    sections = _load_sections(args)
    bundle = load_bundle(args.data)
    cfg = sections["train"][args.scheme]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, steps=args.steps)
    predictor = train_predictor(args.scheme, bundle, cfg,
                                spec=sections["denoiser"],
                                norm_mode=sections["plan"].norm_mode)
    path = predictor.save(args.out)
    final = predictor.training_log[-1] if predictor.training_log else None
    print(f"wrote {path}" + (f" (final loss {final[1]:.5f} @ step {final[0]})"
                             if final else ""))
    return 0


def cmd_eval(args) -> int:
    sections = _load_sections(args)
    plan = sections["plan"]
    predictor = load_predictor(args.ckpt)
    data_dir = Path(args.data)
    val = load_bundle(data_dir / "val.npz").ordered_by_time()
    test = load_bundle(data_dir / "test.npz").ordered_by_time()
    from .harness import _noisy_stack, _windows
    w = predictor.min_window()
    snr = args.snr
    seed = args.seed if args.seed is not None else 0
    jv = _noisy_stack(val.jack_values, snr, [seed, 0, 1])
    av = _noisy_stack(val.alice_values, snr, [seed, 0, 2])
    jt = _noisy_stack(test.jack_values, snr, [seed, 0, 3])
    at = _noisy_stack(test.alice_values, snr, [seed, 0, 4])
    et = _noisy_stack(test.eve_values, snr, [seed, 0, 5])
    val_pos = np.arange(w - 1, val.n_pairs)
    val_d = distance_array(
        predictor.predict_batch(_windows(jv, val_pos, w), rng_seed=seed),
        av[val_pos], plan.metric)
    th = calibrate_from_distances(val_d, plan.metric, plan.target_fa)
    pos = np.arange(w - 1, test.n_pairs)
    preds = predictor.predict_batch(_windows(jt, pos, w), rng_seed=seed + 1)
    eve_by_time = {int(t): i for i, t in enumerate(test.eve_time_index)}
    eve_rows = np.array([eve_by_time[int(t)] for t in test.time_index[pos]])
    legit_d = distance_array(preds, at[pos], plan.metric)
    attack_d = distance_array(preds, et[eve_rows], plan.metric)
    report = summarize_cell(predictor.kind, float(snr), seed, legit_d, attack_d, th)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    sections = _load_sections(args)
    plan = sections["plan"]
    if args.out:
        plan = dataclasses.replace(plan, output_dir=args.out)
    if args.schemes:
        plan = dataclasses.replace(plan, schemes=args.schemes.split(","))
    runner = SweepRunner(plan, sections["denoiser"], sections["train"])
    reports = runner.run(progress=lambda msg: print(msg, file=sys.stderr))
    print(f"wrote {plan.output_dir}/metrics.csv ({len(reports)} rows)")
    for r in reports:
        print(f"  {r.scheme:>6} @ {r.snr_db:>5.1f} dB seed {r.seed}: "
              f"F1={r.f1:.4f} R_e={r.r_e:.4f}")
    return 0


def cmd_latency(args) -> int:
    predictor = load_predictor(args.ckpt)
    bundle = load_bundle(args.data)
    jack, _ = bundle.pair(bundle.n_pairs - 1)
    stats = measure_latency(predictor, jack, n_warmup=args.warmup,
                            n_trials=args.trials)
    print(f"median latency: {stats['median_ms']:.2f} ms "
          f"(IQR {stats['iqr_ms']:.2f} ms, n={stats['n_trials']})")
    print(f"paper reference (different hardware, reported not reproduced): "
          f"{PAPER_REFERENCE_LATENCY_MS} ms")
    if args.power_watts:
        joules = estimate_energy(args.power_watts, stats["median_ms"] / 1e3)
        print(f"estimated energy at {args.power_watts} W: {joules:.3g} J")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    plan_raw = json.loads((run_dir / "plan.json").read_text())
    scenario = ScenarioConfig(**plan_raw.pop("scenario"))
    plan = ExperimentPlan(scenario=scenario, **plan_raw)
    reports = reports_from_cells(run_dir)
    paths = emit_report(reports, plan, run_dir)
    print(f"regenerated {paths['metrics']} ({len(reports)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csiauth",
                                description="Channel-extrapolation PLA experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic bundles")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one scheme on a bundle")
    t.add_argument("--config")
    t.add_argument("--scheme", required=True,
                   choices=["gdm", "vae", "lstm", "gru", "direct"])
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint at one SNR")
    e.add_argument("--config")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--snr", type=float, required=True)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="full scheme x SNR x seed sweep")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--schemes")
    s.set_defaults(func=cmd_sweep)

    l = sub.add_parser("latency", help="measure predict+authenticate latency")
    l.add_argument("--ckpt", required=True)
    l.add_argument("--data", required=True)
    l.add_argument("--trials", type=int, default=10)
    l.add_argument("--warmup", type=int, default=2)
    l.add_argument("--power-watts", type=float)
    l.set_defaults(func=cmd_latency)

    r = sub.add_parser("report", help="regenerate tables/plots from raw verdicts")
    r.add_argument("--run", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
