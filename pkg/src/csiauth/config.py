"""Configuration dataclasses and the declarative config-file loader.

Every experiment is driven by one YAML/JSON document with up to four
top-level sections::

    scenario: ...   # ScenarioConfig fields
    plan:     ...   # ExperimentPlan fields (schemes, snr_db_list, seeds, ...)
    denoiser: ...   # DenoiserSpec fields
    train:    ...   # per-scheme training hyperparameters, e.g. train.gdm.steps

CLI flags override file values; both override the defaults below.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMES = ("gdm", "vae", "lstm", "gru", "direct")


@dataclass
class ScenarioConfig:
    """Synthetic Alice/Jack/Eve scenario parameters.

    The channel model is a fixed multipath geometry (per-path angles, delays
    and powers drawn once from ``rng_seed``) excited by per-time-index path
    gains.  Each gain mixes a static geometry coefficient (weight
    ``rician_kappa``) with diffuse scatter.  Alice's scatter correlates with
    Jack's at ``rho_aj``; their static coefficients correlate at
    ``rho_aj ** mean_decorr_exp``, modelling geometry signatures that
    decorrelate with distance much faster than the diffuse field.
    ``drift_rate`` sets how much of the scatter is redrawn per time index:
    the innovation fraction is ``1 - exp(-drift_rate)``, so 0 freezes the
    environment and large values redraw it sample by sample.
    """

    n_antennas: int = 8
    n_subcarriers: int = 32
    n_paths: int = 4
    rho_aj: float = 0.95
    rho_ae: float = 0.0
    snr_db_list: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0])
    n_samples_train: int = 4000
    n_samples_val: int = 1200
    n_samples_test: int = 2016
    rng_seed: int = 0
    drift_rate: float = 3.0
    rician_kappa: float = 0.7
    mean_decorr_exp: float = 40.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("n_antennas", "n_subcarriers", "n_paths",
                     "n_samples_train", "n_samples_val", "n_samples_test"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        for name in ("rho_aj", "rho_ae"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {v!r}")
        if self.drift_rate < 0.0:
            raise ConfigError("drift_rate", f"must be >= 0, got {self.drift_rate!r}")
        if not 0.0 <= self.rician_kappa < 1.0:
            raise ConfigError("rician_kappa", f"must lie in [0, 1), got {self.rician_kappa!r}")
        if self.mean_decorr_exp < 1.0:
            raise ConfigError("mean_decorr_exp", f"must be >= 1, got {self.mean_decorr_exp!r}")
        if not isinstance(self.rng_seed, int):
            raise ConfigError("rng_seed", f"must be an integer, got {self.rng_seed!r}")
        for i, snr in enumerate(self.snr_db_list):
            if not isinstance(snr, (int, float)):
                raise ConfigError("snr_db_list", f"entry {i} is not a number: {snr!r}")
        if self.rho_aj <= self.rho_ae:
            warnings.warn(
                "rho_aj <= rho_ae: the attacker's channel is at least as close to "
                "Alice's as the collaborator's; authentication is ill-posed",
                stacklevel=2)

    @property
    def fingerprint_shape(self) -> tuple[int, int]:
        return (self.n_antennas, self.n_subcarriers)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class DenoiserSpec:
    """Conditional U-Net size descriptor.

    ``n_layers`` resolution levels with ``blocks_per_layer`` residual blocks
    each; channel width doubles per level up to ``max_channels`` at the
    deepest level.  ``max_spatial`` is the largest input edge (used by the
    complexity estimate).  Two branches are fixed by design: a noisy-target
    branch and a condition branch fused through cross-attention.
    """

    n_layers: int = 2
    blocks_per_layer: int = 1
    max_channels: int = 16
    max_spatial: int = 32
    conditioning: str = "cross_attention"
    branches: int = 2
    time_embed_dim: int = 64
    # Shallowest encoder level that carries cross-attention fusion; the
    # bottleneck always does.  0 attends at full resolution too (quadratic
    # in pixel count).
    attn_min_level: int = 1

    def __post_init__(self):
        for name in ("n_layers", "blocks_per_layer", "max_channels",
                     "max_spatial", "time_embed_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        if self.conditioning != "cross_attention":
            raise ConfigError("conditioning", f"unsupported mode {self.conditioning!r}")
        if self.branches != 2:
            raise ConfigError("branches", "the dual-branch design is fixed at 2")
        if self.max_channels % (2 ** (self.n_layers - 1)) != 0:
            raise ConfigError("max_channels",
                              f"must be divisible by 2**(n_layers-1)={2**(self.n_layers-1)}")
        if self.attn_min_level < 0:
            raise ConfigError("attn_min_level", "must be >= 0")

    @property
    def base_channels(self) -> int:
        return self.max_channels // (2 ** (self.n_layers - 1))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainConfig:
    """Hyperparameters shared by all trainable predictors."""

    steps: int = 2000
    batch_size: int = 64
    lr: float = 2e-3
    seed: int = 0
    log_every: int = 100
    # Condition-side noise augmentation range (dB); None disables it.
    cond_snr_augment: tuple[float, float] | None = (5.0, 20.0)
    # VAE-only
    latent_dim: int = 64
    beta_kl: float = 1.0
    # Recurrent-only
    window: int = 8
    hidden_size: int = 192
    include_current: bool = False
    # GDM-only
    t_train: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    schedule_kind: str = "linear"
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError("steps", "must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size", "must be positive")
        if self.lr <= 0:
            raise ConfigError("lr", "must be positive")
        if self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if self.cond_snr_augment is not None:
            lo, hi = self.cond_snr_augment
            if lo > hi:
                raise ConfigError("cond_snr_augment", f"range inverted: {lo} > {hi}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["cond_snr_augment"] is not None:
            d["cond_snr_augment"] = list(d["cond_snr_augment"])
        return d


@dataclass
class ExperimentPlan:
    """One reproducible sweep: schemes x SNRs x seeds."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    external_dataset: str | None = None
    external_mapping: str | None = None
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    snr_db_list: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0])
    ddim_steps: int = 20
    ddim_eta: float = 0.0
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs/sweep"
    power_watts: float | None = None
    target_fa: float = 0.01
    n_trials_legit: int = 2000
    n_trials_attack: int = 2000
    metric: str = "nmse"
    norm_mode: str = "per_sample"
    measure_timing: bool = False
    train_if_missing: bool = True

    def __post_init__(self):
        if not self.schemes:
            raise ConfigError("schemes", "must not be empty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError("schemes", f"unknown scheme {s!r}; choose from {SCHEMES}")
        if not self.snr_db_list:
            raise ConfigError("snr_db_list", "must not be empty")
        if self.ddim_steps < 1:
            raise ConfigError("ddim_steps", "must be >= 1")
        if not 0.0 <= self.ddim_eta <= 1.0:
            raise ConfigError("ddim_eta", "must lie in [0, 1]")
        if not self.seeds:
            raise ConfigError("seeds", "must not be empty")
        if not 0.0 < self.target_fa < 1.0:
            raise ConfigError("target_fa", "must lie in (0, 1)")
        if self.metric not in ("nmse", "euclidean", "cosine"):
            raise ConfigError("metric", f"unknown metric {self.metric!r}")
        if self.norm_mode not in ("per_sample", "per_dataset"):
            raise ConfigError("norm_mode", f"unknown mode {self.norm_mode!r}")
        if self.power_watts is not None and self.power_watts <= 0:
            raise ConfigError("power_watts", "must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d


def _build(cls, section: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(name, f"unknown keys {sorted(unknown)}")
    return cls(**section)


def load_config(path: str | Path) -> dict:
    """Parse a YAML/JSON config file into typed sections.

    Returns ``{"scenario": ScenarioConfig, "plan": ExperimentPlan,
    "denoiser": DenoiserSpec, "train": {scheme: TrainConfig}}``; missing
    sections fall back to defaults.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    text = path.read_text()
    if path.suffix in (".yml", ".yaml"):
        import yaml
        raw = yaml.safe_load(text) or {}
    else:
        raw = json.loads(text or "{}")
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")

    scenario = _build(ScenarioConfig, raw.get("scenario", {}), "scenario")
    plan_section = dict(raw.get("plan", {}))
    plan_section["scenario"] = scenario
    if "snr_db_list" not in plan_section:
        plan_section["snr_db_list"] = list(scenario.snr_db_list)
    plan = _build(ExperimentPlan, plan_section, "plan")
    denoiser = _build(DenoiserSpec, raw.get("denoiser", {}), "denoiser")

    train_raw = raw.get("train", {})
    train = {}
    for scheme in SCHEMES:
        section = dict(train_raw.get(scheme, {}))
        if "cond_snr_augment" in section and section["cond_snr_augment"] is not None:
            section["cond_snr_augment"] = tuple(section["cond_snr_augment"])
        train[scheme] = _build(TrainConfig, section, f"train.{scheme}")
    return {"scenario": scenario, "plan": plan, "denoiser": denoiser, "train": train}
