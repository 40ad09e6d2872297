"""Reproducible experiment orchestration: sweeps, timing, reports.

A sweep walks (scheme x SNR x seed) cells over one scenario.  Per cell it
calibrates the acceptance threshold on noisy validation pairs, scores 2000+
legitimate and attack trials on the test split, and persists the raw
verdicts so every metrics row can be regenerated offline.  Trial windows,
observation noise and prediction seeds are shared across schemes, so the
comparison runs on common random numbers.

Timing is opt-in (``plan.measure_timing``): wall-clock latencies are not
reproducible bit-for-bit, so the deterministic metrics table leaves the
latency/energy columns empty unless requested.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .auth import (AuthThreshold, MetricsReport, authenticate,
                   calibrate_from_distances, distance_array, summarize_cell)
from .bundle import DatasetBundle, load_external_dataset
from .config import DenoiserSpec, ExperimentPlan, ScenarioConfig, TrainConfig
from .csi import ALICE, EVE, ComplexCsi
from .errors import ConfigError
from .predictors import (Predictor, checkpoint_hash, load_predictor,
                         train_predictor)
from .scenario import add_noise_array, generate_pair_sequence, split_dataset


@dataclass
class ComplexityParams:
    """Operands of the denoiser cost model: steps, batch and network size."""

    T: int
    B: int
    L: int
    N: int
    C: int
    S: int

    def __post_init__(self):
        for name in ("T", "B", "L", "N", "C", "S"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")


def estimate_complexity(p: ComplexityParams) -> int:
    """Exact operation count T*B*L*N*(2*C^2*S + 4*S^2*C).

    Python integers are arbitrary precision, so fields up to 2**20 (and far
    beyond) cannot overflow.
    """
    return p.T * p.B * p.L * p.N * (2 * p.C ** 2 * p.S + 4 * p.S ** 2 * p.C)


def estimate_energy(power_watts: float, latency_s: float) -> float:
    """Energy per authentication = configured power x measured time."""
    if power_watts <= 0 or latency_s <= 0:
        raise ValueError("power_watts and latency_s must both be positive")
    return power_watts * latency_s


def measure_latency(predictor: Predictor, sample: ComplexCsi,
                    n_warmup: int = 2, n_trials: int = 10,
                    threshold: AuthThreshold | None = None) -> dict:
    """Median and IQR (ms) of end-to-end predict + authenticate wall time."""
    if n_trials < 3:
        raise ValueError("n_trials must be >= 3")
    th = threshold or AuthThreshold("nmse", 1.0)
    reference = sample
    for _ in range(n_warmup):
        pred = predictor.predict(sample, rng_seed=0)
        authenticate(pred, reference, th, ground_truth=ALICE)
    times = []
    for i in range(n_trials):
        t0 = time.perf_counter()
        pred = predictor.predict(sample, rng_seed=i)
        authenticate(pred, reference, th, ground_truth=ALICE)
        times.append((time.perf_counter() - t0) * 1e3)
    q25, q50, q75 = np.percentile(times, [25, 50, 75])
    return {"median_ms": float(q50), "iqr_ms": float(q75 - q25),
            "p25_ms": float(q25), "p75_ms": float(q75),
            "n_trials": n_trials, "times_ms": times}


def _hash_dict(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def default_train_cfgs(base_seed: int = 0) -> dict[str, TrainConfig]:
    """Desk-scale defaults: every scheme trains in minutes on a laptop CPU."""
    return {
        "gdm": TrainConfig(steps=2200, batch_size=64, lr=2e-3, seed=base_seed),
        "vae": TrainConfig(steps=1600, batch_size=64, lr=1.5e-3, seed=base_seed),
        "lstm": TrainConfig(steps=1200, batch_size=64, lr=2e-3, seed=base_seed),
        "gru": TrainConfig(steps=1200, batch_size=64, lr=2e-3, seed=base_seed),
        "direct": TrainConfig(steps=1, batch_size=1, seed=base_seed),
    }


def _resolve_bundles(plan: ExperimentPlan) -> dict[str, DatasetBundle]:
    if plan.external_dataset:
        bundle = load_external_dataset(plan.external_dataset, plan.external_mapping)
        train, val, test = split_dataset(bundle, (0.7, 0.15, 0.15))
        return {"train": train, "val": val, "test": test}
    return generate_pair_sequence(plan.scenario)


def _noisy_stack(values: np.ndarray, snr_db: float, seed_chain: list) -> np.ndarray:
    return add_noise_array(values, snr_db, np.random.default_rng(seed_chain))


def _windows(stack: np.ndarray, indices: np.ndarray, w: int) -> np.ndarray:
    return np.stack([stack[i - w + 1:i + 1] for i in indices])


class SweepRunner:
    """Executes one plan; cells are independent and canonically ordered."""

    def __init__(self, plan: ExperimentPlan, denoiser: DenoiserSpec | None = None,
                 train_cfgs: dict[str, TrainConfig] | None = None):
        self.plan = plan
        self.denoiser = denoiser or DenoiserSpec()
        self.train_cfgs = train_cfgs or default_train_cfgs()
        self.out = Path(plan.output_dir)
        self.scenario_hash = _hash_dict(plan.scenario.to_dict())
        self.config_hash = _hash_dict(plan.to_dict())

    # -- training ---------------------------------------------------------
    def checkpoint_path(self, scheme: str, seed: int) -> Path:
        return self.out / "checkpoints" / f"{scheme}_seed{seed}.npz"

    def get_predictor(self, scheme: str, seed: int,
                      train_bundle: DatasetBundle) -> tuple[Predictor, str]:
        path = self.checkpoint_path(scheme, seed)
        if path.exists():
            return load_predictor(path), checkpoint_hash(path)
        if not self.plan.train_if_missing and scheme != "direct":
            raise FileNotFoundError(
                f"no checkpoint for scheme '{scheme}' (seed {seed}) at {path} "
                f"and training is disabled")
        cfg = dataclasses.replace(self.train_cfgs[scheme], seed=seed)
        predictor = train_predictor(scheme, train_bundle, cfg,
                                    spec=self.denoiser, norm_mode=self.plan.norm_mode)
        if scheme == "gdm":
            predictor.ddim_steps = self.plan.ddim_steps
            predictor.ddim_eta = self.plan.ddim_eta
        predictor.save(path)
        return predictor, checkpoint_hash(path)

    # -- evaluation -------------------------------------------------------
    def run(self, progress=None) -> list[MetricsReport]:
        plan = self.plan
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "plan.json").write_text(
            json.dumps(plan.to_dict(), indent=2, sort_keys=True))
        bundles = _resolve_bundles(plan)
        train_b = bundles["train"]
        val_b = bundles["val"].ordered_by_time()
        test_b = bundles["test"].ordered_by_time()

        reports = []
        for seed in plan.seeds:
            predictors = {}
            hashes = {}
            for scheme in plan.schemes:
                if progress:
                    progress(f"[seed {seed}] training {scheme}")
                predictors[scheme], hashes[scheme] = self.get_predictor(
                    scheme, seed, train_b)
            w_max = max(p.min_window() for p in predictors.values())

            n_legit = plan.n_trials_legit
            n_attack = plan.n_trials_attack
            n_avail = test_b.n_pairs - (w_max - 1)
            if n_avail < max(n_legit, n_attack):
                raise ValueError(
                    f"test split supports {n_avail} trials with window {w_max}; "
                    f"plan asks for {max(n_legit, n_attack)}")
            trial_pos = np.arange(w_max - 1, w_max - 1 + max(n_legit, n_attack))
            eve_by_time = {int(t): i for i, t in enumerate(test_b.eve_time_index)}
            eve_rows = np.array([eve_by_time[int(t)]
                                 for t in test_b.time_index[trial_pos]])

            val_pos = np.arange(w_max - 1, val_b.n_pairs)

            for si, snr in enumerate(plan.snr_db_list):
                jack_val_n = _noisy_stack(val_b.jack_values, snr, [seed, si, 1])
                alice_val_n = _noisy_stack(val_b.alice_values, snr, [seed, si, 2])
                jack_test_n = _noisy_stack(test_b.jack_values, snr, [seed, si, 3])
                alice_test_n = _noisy_stack(test_b.alice_values, snr, [seed, si, 4])
                eve_test_n = _noisy_stack(test_b.eve_values, snr, [seed, si, 5])

                for scheme in plan.schemes:
                    if progress:
                        progress(f"[seed {seed}] eval {scheme} @ {snr} dB")
                    pred = predictors[scheme]
                    w = pred.min_window()
                    val_windows = _windows(jack_val_n, val_pos, w)
                    val_preds = pred.predict_batch(val_windows,
                                                   rng_seed=_cell_seed(seed, si, 0))
                    val_d = distance_array(val_preds, alice_val_n[val_pos],
                                           plan.metric)
                    th = calibrate_from_distances(val_d, plan.metric, plan.target_fa)

                    test_windows = _windows(jack_test_n, trial_pos, w)
                    test_preds = pred.predict_batch(test_windows,
                                                    rng_seed=_cell_seed(seed, si, 1))
                    legit_d = distance_array(test_preds[:n_legit],
                                             alice_test_n[trial_pos[:n_legit]],
                                             plan.metric)
                    attack_d = distance_array(
                        test_preds[:n_attack],
                        eve_test_n[eve_rows[:n_attack]], plan.metric)

                    provenance = {
                        "scenario_hash": self.scenario_hash,
                        "config_hash": self.config_hash,
                        "checkpoint_hash": hashes[scheme],
                        "n_val": int(len(val_d)),
                    }
                    report = summarize_cell(scheme, float(snr), seed,
                                            legit_d, attack_d, th,
                                            provenance=provenance)
                    if scheme == "gdm":
                        report.complexity_ops = estimate_complexity(
                            ComplexityParams(plan.ddim_steps, 1,
                                             self.denoiser.n_layers,
                                             self.denoiser.blocks_per_layer,
                                             self.denoiser.max_channels,
                                             self.denoiser.max_spatial))
                    self._persist_cell(report, th,
                                       test_b.time_index[trial_pos],
                                       legit_d, attack_d)
                    reports.append(report)

            if plan.measure_timing:
                self._measure_timing(predictors, test_b, seed, reports)

        reports = sorted(reports, key=lambda r: (r.scheme, r.snr_db, r.seed))
        emit_report(reports, plan, self.out)
        return reports

    def _measure_timing(self, predictors, test_b, seed, reports):
        sample_jack, _ = test_b.pair(test_b.n_pairs - 1)
        rows = []
        for scheme, pred in predictors.items():
            stats = measure_latency(pred, sample_jack, n_warmup=1, n_trials=5)
            energy = (estimate_energy(self.plan.power_watts,
                                      stats["median_ms"] / 1e3)
                      if self.plan.power_watts else None)
            rows.append((scheme, seed, stats["median_ms"], stats["iqr_ms"], energy))
            for r in reports:
                if r.scheme == scheme and r.seed == seed:
                    r.latency_ms = stats["median_ms"]
                    r.energy_j = energy
        path = self.out / "timing.csv"
        new = not path.exists()
        with path.open("a") as f:
            if new:
                f.write("scheme,seed,latency_ms_median,latency_ms_iqr,energy_j\n")
            for scheme, sd, med, iqr, en in rows:
                f.write(f"{scheme},{sd},{med:.3f},{iqr:.3f},"
                        f"{'' if en is None else format(en, '.6g')}\n")

    def _persist_cell(self, report: MetricsReport, th: AuthThreshold,
                      trial_times: np.ndarray, legit_d: np.ndarray,
                      attack_d: np.ndarray):
        cell = self.out / "cells" / (f"{report.scheme}_snr{report.snr_db:g}"
                                     f"_seed{report.seed}")
        cell.mkdir(parents=True, exist_ok=True)
        meta = {"scheme": report.scheme, "snr_db": report.snr_db,
                "seed": report.seed, "metric": th.metric_kind,
                "threshold": th.tau, "target_fa": th.target_fa,
                "n_val": th.n_val, "quantile_rank": th.quantile_rank,
                "complexity_ops": report.complexity_ops,
                "provenance": report.provenance}
        (cell / "cell.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        with (cell / "verdicts.csv").open("w") as f:
            f.write("time_index,ground_truth,distance,accept\n")
            for t, d in zip(trial_times[:len(legit_d)], legit_d):
                f.write(f"{int(t)},alice,{format(float(d), '.17g')},"
                        f"{int(d <= th.tau)}\n")
            for t, d in zip(trial_times[:len(attack_d)], attack_d):
                f.write(f"{int(t)},eve,{format(float(d), '.17g')},"
                        f"{int(d <= th.tau)}\n")


def run_sweep(plan: ExperimentPlan, denoiser: DenoiserSpec | None = None,
              train_cfgs: dict[str, TrainConfig] | None = None,
              progress=None) -> list[MetricsReport]:
    return SweepRunner(plan, denoiser, train_cfgs).run(progress=progress)


def reports_from_cells(out_dir: str | Path) -> list[MetricsReport]:
    """Rebuild every metrics row from the persisted raw verdicts."""
    out = Path(out_dir)
    reports = []
    for cell_json in sorted((out / "cells").glob("*/cell.json")):
        meta = json.loads(cell_json.read_text())
        legit, attack = [], []
        with (cell_json.parent / "verdicts.csv").open() as f:
            next(f)
            for line in f:
                _, truth, dist, _ = line.rstrip("\n").split(",")
                (legit if truth == "alice" else attack).append(float(dist))
        th = AuthThreshold(meta["metric"], meta["threshold"], meta["target_fa"],
                           meta["n_val"], meta["quantile_rank"])
        report = summarize_cell(meta["scheme"], meta["snr_db"], meta["seed"],
                                np.asarray(legit), np.asarray(attack), th,
                                provenance=meta.get("provenance", {}))
        report.complexity_ops = meta.get("complexity_ops")
        reports.append(report)
    return sorted(reports, key=lambda r: (r.scheme, r.snr_db, r.seed))


def emit_report(reports: list[MetricsReport], plan: ExperimentPlan,
                out_dir: str | Path) -> dict[str, Path]:
    """Write the metrics table, structured summary and per-metric plots."""
    if not reports:
        raise ValueError("no reports to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = sorted(reports, key=lambda r: (r.scheme, r.snr_db, r.seed))

    csv_path = out / "metrics.csv"
    lines = [",".join(MetricsReport.csv_columns())]
    lines += [r.csv_row() for r in reports]
    csv_path.write_text("\n".join(lines) + "\n")

    summary_path = out / "summary.json"
    summary = {"plan": plan.to_dict(),
               "rows": [r.to_dict() for r in reports]}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))

    plot_paths = _plot_metrics(reports, out)
    return {"metrics": csv_path, "summary": summary_path, **plot_paths}


def _plot_metrics(reports: list[MetricsReport], out: Path) -> dict[str, Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    schemes = sorted({r.scheme for r in reports})
    snrs = sorted({r.snr_db for r in reports})
    paths = {}
    for metric, label, fname in (("f1", "F1 (paper formula)", "f1_vs_snr.png"),
                                 ("r_e", "Authentication error rate", "re_vs_snr.png")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for scheme in schemes:
            ys = []
            for snr in snrs:
                vals = [getattr(r, metric) for r in reports
                        if r.scheme == scheme and r.snr_db == snr]
                ys.append(np.mean(vals) if vals else np.nan)
            ax.plot(snrs, ys, marker="o", label=scheme)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(label)
        ax.set_ylim(-0.05, 1.05)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths[metric] = path
    return paths


def _cell_seed(seed: int, snr_index: int, stage: int) -> int:
    return (seed * 1000003 + snr_index * 101 + stage) % (2 ** 31)
