"""Authentication decisions, threshold calibration and the paper's metrics.

A fingerprint under test is accepted when its distance to the predicted
fingerprint falls at or below a threshold tau calibrated on legitimate
validation traffic (empirical (1 - target_fa) quantile, nearest-rank).

Metric naming: ``p_tl`` is the correct-authentication rate on legitimate
trials.  ``p_ta`` keeps the paper's symbol; the printed F1 formula
F1 = 2*P_tl*P_ta/(P_tl+P_ta) only reaches 1 when both arguments reach 1, so
it is computed from the attack-detection rate (the fraction of spoofing
trials correctly rejected).  The raw false-alarm rate is reported alongside
as ``fa_rate``, and a conventional precision/recall F1 as
``f1_conventional``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .csi import ComplexCsi
from .errors import DataError, ShapeError

DISTANCE_KINDS = ("nmse", "euclidean", "cosine")


def distance_array(pred: np.ndarray, obs: np.ndarray, kind: str = "nmse") -> np.ndarray:
    """Vectorized fingerprint distances over stacks [N, A, K]."""
    pred = np.asarray(pred)
    obs = np.asarray(obs)
    if pred.shape != obs.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {obs.shape}")
    axes = tuple(range(1, pred.ndim))
    diff2 = np.sum(np.abs(pred - obs) ** 2, axis=axes)
    if kind == "nmse":
        ref = np.sum(np.abs(obs) ** 2, axis=axes)
        if np.any(ref == 0.0):
            raise DataError("nmse undefined: reference fingerprint has zero norm")
        return diff2 / ref
    if kind == "euclidean":
        return np.sqrt(diff2)
    if kind == "cosine":
        na = np.sqrt(np.sum(np.abs(pred) ** 2, axis=axes))
        nb = np.sqrt(np.sum(np.abs(obs) ** 2, axis=axes))
        if np.any(na == 0.0) or np.any(nb == 0.0):
            raise DataError("cosine undefined for zero-norm fingerprints")
        inner = np.abs(np.sum(pred * np.conj(obs), axis=axes))
        return 1.0 - np.minimum(inner / (na * nb), 1.0)
    raise ValueError(f"unknown distance kind {kind!r}")


def fingerprint_distance(a: ComplexCsi, b: ComplexCsi, kind: str = "nmse") -> float:
    """Distance between a predicted fingerprint ``a`` and an observed ``b``."""
    return float(distance_array(a.values[None], b.values[None], kind)[0])


@dataclass(frozen=True)
class AuthThreshold:
    metric_kind: str
    tau: float
    target_fa: float = 0.01
    n_val: int = 0
    quantile_rank: int = 0

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau < 0:
            raise DataError(f"threshold must be finite and >= 0, got {self.tau}")


@dataclass(frozen=True)
class AuthVerdict:
    distance: float
    accept: bool
    ground_truth: str | None = None


def nearest_rank_quantile(values: np.ndarray, q: float) -> tuple[float, int]:
    """Classic nearest-rank quantile: sorted[ceil(q*n)] (1-based)."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = len(values)
    rank = max(1, min(n, math.ceil(q * n)))
    return float(values[rank - 1]), rank


def calibrate_from_distances(distances: np.ndarray, kind: str,
                             target_fa: float) -> AuthThreshold:
    distances = np.asarray(distances, dtype=np.float64)
    if not 0.0 < target_fa < 1.0:
        raise ValueError(f"target_fa must lie in (0, 1), got {target_fa}")
    n = len(distances)
    if n < 1.0 / target_fa:
        raise ValueError(f"too few validation samples for target_fa={target_fa}: "
                         f"need >= {math.ceil(1.0 / target_fa)}, got {n}")
    tau, rank = nearest_rank_quantile(distances, 1.0 - target_fa)
    return AuthThreshold(kind, tau, target_fa, n, rank)


def calibrate_threshold(predictor, val_bundle, kind: str = "nmse",
                        target_fa: float = 0.01, rng_seed: int = 0) -> AuthThreshold:
    """Calibrate tau from legitimate validation pairs only.

    The bundle's jack values act as the online observation; its alice values
    are the fingerprints under test.  Both may already carry estimation
    noise at the operating SNR.
    """
    ordered = val_bundle.ordered_by_time()
    w = predictor.min_window()
    jack, alice = ordered.jack_values, ordered.alice_values
    if ordered.n_pairs < w:
        raise ValueError(f"validation bundle too small for window {w}")
    idx = np.arange(w - 1, ordered.n_pairs)
    windows = np.stack([jack[i - w + 1:i + 1] for i in idx])
    preds = predictor.predict_batch(windows, rng_seed=rng_seed)
    distances = distance_array(preds, alice[idx], kind)
    return calibrate_from_distances(distances, kind, target_fa)


def authenticate(x_hat: ComplexCsi, x_tilde: ComplexCsi, th: AuthThreshold,
                 ground_truth: str | None = None) -> AuthVerdict:
    """Accept iff distance(x_hat, x_tilde) <= tau (boundary accepts)."""
    d = fingerprint_distance(x_hat, x_tilde, th.metric_kind)
    return AuthVerdict(distance=d, accept=bool(d <= th.tau), ground_truth=ground_truth)


def compute_f1(p_tl: float, p_ta: float) -> float:
    """The paper's F1 = 2*P_tl*P_ta / (P_tl + P_ta); defined 0 at (0, 0)."""
    for name, v in (("p_tl", p_tl), ("p_ta", p_ta)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if p_tl == 0.0 and p_ta == 0.0:
        return 0.0
    return 2.0 * p_tl * p_ta / (p_tl + p_ta)


def compute_error_rate(verdicts: list[AuthVerdict]) -> float:
    """Fraction of decisions where accept disagrees with (truth == alice)."""
    if not verdicts:
        raise ValueError("empty verdict list")
    wrong = 0
    for v in verdicts:
        if v.ground_truth is None:
            raise DataError("verdict lacks ground truth; error rate undefined")
        wrong += int(v.accept != (v.ground_truth == "alice"))
    return wrong / len(verdicts)


def roc_curve(legit_distances, attack_distances, n_points: int = 101):
    """(threshold, tpr, fpr) triples, monotone, spanning (0,0) to (1,1).

    tpr is the legitimate-acceptance rate and fpr the attack-acceptance rate
    as the acceptance threshold sweeps upward.
    """
    legit = np.sort(np.asarray(legit_distances, dtype=np.float64))
    attack = np.sort(np.asarray(attack_distances, dtype=np.float64))
    if len(legit) == 0 or len(attack) == 0:
        raise ValueError("both distance lists must be nonempty")
    pooled = np.unique(np.concatenate([legit, attack]))
    if len(pooled) > n_points - 2:
        take = np.linspace(0, len(pooled) - 1, n_points - 2).round().astype(int)
        pooled = pooled[np.unique(take)]
    thresholds = np.concatenate([[-np.inf], pooled, [np.inf]])
    points = []
    for tau in thresholds:
        tpr = float(np.searchsorted(legit, tau, side="right")) / len(legit)
        fpr = float(np.searchsorted(attack, tau, side="right")) / len(attack)
        points.append((float(tau), tpr, fpr))
    return points


@dataclass
class MetricsReport:
    """Per-(scheme, SNR, seed) authentication statistics."""

    scheme: str
    snr_db: float
    seed: int
    p_tl: float
    p_ta: float
    f1: float
    f1_conventional: float
    r_e: float
    fa_rate: float
    threshold: float
    counts: dict
    roc: list = field(default_factory=list)
    latency_ms: float | None = None
    energy_j: float | None = None
    complexity_ops: int | None = None
    provenance: dict = field(default_factory=dict)

    @staticmethod
    def csv_columns() -> list[str]:
        return ["scheme", "snr_db", "seed", "p_tl", "p_ta", "f1",
                "f1_conventional", "r_e", "latency_ms", "energy_j",
                "complexity_ops"]

    def csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".6g")
            return str(v)
        return ",".join(fmt(getattr(self, c)) for c in self.csv_columns())

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme, "snr_db": self.snr_db, "seed": self.seed,
            "p_tl": self.p_tl, "p_ta": self.p_ta, "f1": self.f1,
            "f1_conventional": self.f1_conventional, "r_e": self.r_e,
            "fa_rate": self.fa_rate, "threshold": self.threshold,
            "counts": self.counts, "latency_ms": self.latency_ms,
            "energy_j": self.energy_j, "complexity_ops": self.complexity_ops,
            "provenance": self.provenance,
        }


def summarize_cell(scheme: str, snr_db: float, seed: int,
                   legit_distances: np.ndarray, attack_distances: np.ndarray,
                   th: AuthThreshold, with_roc: bool = True,
                   provenance: dict | None = None) -> MetricsReport:
    """Aggregate one sweep cell's verdicts into a MetricsReport."""
    legit = np.asarray(legit_distances, dtype=np.float64)
    attack = np.asarray(attack_distances, dtype=np.float64)
    tp = int(np.sum(legit <= th.tau))
    fn = len(legit) - tp
    fp = int(np.sum(attack <= th.tau))
    tn = len(attack) - fp
    p_tl = tp / len(legit)
    p_ta = tn / len(attack)           # attack-detection rate (see module doc)
    fa_rate = fn / len(legit)
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = p_tl
    f1_conv = (2 * precision * recall / (precision + recall)
               if (precision + recall) else 0.0)
    r_e = (fn + fp) / (len(legit) + len(attack))
    counts = {"n_legit": len(legit), "n_attack": len(attack),
              "tp": tp, "fn": fn, "fp": fp, "tn": tn}
    return MetricsReport(
        scheme=scheme, snr_db=snr_db, seed=seed,
        p_tl=p_tl, p_ta=p_ta, f1=compute_f1(p_tl, p_ta),
        f1_conventional=f1_conv, r_e=r_e, fa_rate=fa_rate,
        threshold=th.tau, counts=counts,
        roc=roc_curve(legit, attack) if with_roc else [],
        provenance=provenance or {})
