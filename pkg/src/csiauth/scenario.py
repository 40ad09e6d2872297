"""Synthetic Alice/Jack/Eve channel fingerprint generation.

Channel model
-------------
A fixed multipath geometry is drawn once per ``rng_seed``: per-path angles
(uniform ULA steering), normalized delays (subcarrier phase ramps) and an
exponential power profile.  The frequency response is

    X[a, k] = sum_p  g[p] * exp(j*pi*a*sin(theta_p)) * exp(-2j*pi*k*delta_p)

with per-time-index gains ``g``.  Each gain mixes a static geometry
coefficient (weight ``rician_kappa``) with diffuse scatter (weight
``1 - rician_kappa``).  Jack's and Alice's scatter share a common component
at correlation ``rho_aj``; their static coefficients correlate only at
``rho_aj ** mean_decorr_exp``.  Eve follows the same construction relative
to Alice with ``rho_ae``, but her static coefficient is redrawn per sample
(an attacker transmitting from varying positions).

Randomness is counter-based: every sample's draws come from
``default_rng([rng_seed, tag, time_index])``, so generation is
order-independent and bit-identical whether produced serially, in parallel
or one index at a time.
"""

from __future__ import annotations

import math

import numpy as np

from .bundle import DatasetBundle
from .config import ScenarioConfig
from .csi import ALICE, EVE, JACK, ComplexCsi, signal_power
from .errors import ConfigError, DataError, StateError

_TAG_GEOMETRY = 101
_TAG_STATIC = 202
_TAG_SCATTER = 303
_TAG_EVE = 404
_TAG_BASE = 505
_TAG_NOISE = 606


def _cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian, unit variance per element."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


class ScenarioGeometry:
    """Deterministic per-seed geometry: steering/delay signatures and powers."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.rng_seed, _TAG_GEOMETRY])
        p = cfg.n_paths
        self.angles = rng.uniform(-math.pi / 3, math.pi / 3, p)
        self.delays = rng.uniform(0.0, 0.35, p)
        powers = np.exp(-0.6 * np.arange(p))
        self.powers = powers / powers.sum()
        ant = np.arange(cfg.n_antennas)[:, None]
        sub = np.arange(cfg.n_subcarriers)[:, None]
        # [n_antennas, P] and [n_subcarriers, P] signatures
        self.steer = np.exp(1j * math.pi * ant * np.sin(self.angles)[None, :])
        self.ramp = np.exp(-2j * math.pi * sub * self.delays[None, :])

        srng = np.random.default_rng([cfg.rng_seed, _TAG_STATIC])
        self.c_jack = _cgauss(srng, p)
        c_ind = _cgauss(srng, p)
        rho_m = cfg.rho_aj ** cfg.mean_decorr_exp
        self.c_alice = rho_m * self.c_jack + math.sqrt(1.0 - rho_m ** 2) * c_ind

        brng = np.random.default_rng([cfg.rng_seed, _TAG_BASE])
        self.s_base = _cgauss(brng, p)      # shared scatter baseline
        self.u_base = _cgauss(brng, p)      # Alice-private scatter baseline
        self.e_base = _cgauss(brng, p)      # Eve-private scatter baseline

    @property
    def innovation_weight(self) -> float:
        return 1.0 - math.exp(-self.cfg.drift_rate)

    def gains_to_csi(self, gains: np.ndarray) -> np.ndarray:
        """Map path gains [..., P] to fingerprints [..., n_antennas, n_subcarriers]."""
        return np.einsum("ap,kp,...p->...ak", self.steer, self.ramp, gains)

    def _scatter(self, time_indices: np.ndarray):
        """Per-time shared and Alice-private scatter vectors, [T, P] each."""
        cfg = self.cfg
        w = self.innovation_weight
        t_count = len(time_indices)
        shared = np.empty((t_count, cfg.n_paths), dtype=np.complex128)
        private = np.empty_like(shared)
        for i, t in enumerate(time_indices):
            rng = np.random.default_rng([cfg.rng_seed, _TAG_SCATTER, int(t)])
            shared[i] = _cgauss(rng, cfg.n_paths)
            private[i] = _cgauss(rng, cfg.n_paths)
        shared = math.sqrt(1.0 - w) * self.s_base[None, :] + math.sqrt(w) * shared
        private = math.sqrt(1.0 - w) * self.u_base[None, :] + math.sqrt(w) * private
        return shared, private

    def pair_gains(self, time_indices: np.ndarray):
        """Jack and Alice path gains for the given time indices, [T, P] each."""
        cfg = self.cfg
        shared, private = self._scatter(time_indices)
        rho = cfg.rho_aj
        z_jack = shared
        z_alice = rho * shared + math.sqrt(1.0 - rho ** 2) * private
        root_k = math.sqrt(cfg.rician_kappa)
        root_s = math.sqrt(1.0 - cfg.rician_kappa)
        amp = np.sqrt(self.powers)[None, :]
        g_jack = amp * (root_k * self.c_jack[None, :] + root_s * z_jack)
        g_alice = amp * (root_k * self.c_alice[None, :] + root_s * z_alice)
        return g_jack, g_alice

    def eve_gains(self, time_indices: np.ndarray) -> np.ndarray:
        """Eve path gains [T, P]; correlated with Alice at rho_ae."""
        cfg = self.cfg
        shared, private = self._scatter(time_indices)
        rho = cfg.rho_aj
        z_alice = rho * shared + math.sqrt(1.0 - rho ** 2) * private
        w = self.innovation_weight
        rho_e = cfg.rho_ae
        rho_e_m = cfg.rho_ae ** cfg.mean_decorr_exp
        t_count = len(time_indices)
        fresh_static = np.empty((t_count, cfg.n_paths), dtype=np.complex128)
        fresh_scatter = np.empty_like(fresh_static)
        for i, t in enumerate(time_indices):
            rng = np.random.default_rng([cfg.rng_seed, _TAG_EVE, int(t)])
            fresh_static[i] = _cgauss(rng, cfg.n_paths)
            fresh_scatter[i] = _cgauss(rng, cfg.n_paths)
        fresh_scatter = (math.sqrt(1.0 - w) * self.e_base[None, :]
                         + math.sqrt(w) * fresh_scatter)
        c_eve = rho_e_m * self.c_alice[None, :] + math.sqrt(1.0 - rho_e_m ** 2) * fresh_static
        z_eve = rho_e * z_alice + math.sqrt(1.0 - rho_e ** 2) * fresh_scatter
        root_k = math.sqrt(cfg.rician_kappa)
        root_s = math.sqrt(1.0 - cfg.rician_kappa)
        amp = np.sqrt(self.powers)[None, :]
        return amp * (root_k * c_eve + root_s * z_eve)


def generate_pair_values(cfg: ScenarioConfig, time_indices) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless (jack, alice) fingerprint stacks for explicit time indices."""
    geo = ScenarioGeometry(cfg)
    time_indices = np.asarray(time_indices, dtype=np.int64)
    g_jack, g_alice = geo.pair_gains(time_indices)
    return geo.gains_to_csi(g_jack), geo.gains_to_csi(g_alice)


def generate_pair_sequence(cfg: ScenarioConfig) -> dict[str, DatasetBundle]:
    """Generate train/val/test bundles of noiseless aligned Alice/Jack pairs.

    Time indices are global (train, then val, then test) so splits are
    disjoint by construction.  Eve samples are attached to the test split,
    aligned with its time indices.
    """
    cfg.validate()
    geo = ScenarioGeometry(cfg)
    counts = {
        "train": cfg.n_samples_train,
        "val": cfg.n_samples_val,
        "test": cfg.n_samples_test,
    }
    bundles = {}
    start = 0
    for split, count in counts.items():
        idx = np.arange(start, start + count, dtype=np.int64)
        start += count
        g_jack, g_alice = geo.pair_gains(idx)
        jack = geo.gains_to_csi(g_jack)
        alice = geo.gains_to_csi(g_alice)
        eve = np.zeros((0,) + cfg.fingerprint_shape, dtype=np.complex128)
        eve_idx = np.zeros(0, dtype=np.int64)
        if split == "test":
            eve = geo.gains_to_csi(geo.eve_gains(idx))
            eve_idx = idx.copy()
        bundles[split] = DatasetBundle(
            jack_values=jack, alice_values=alice, time_index=idx,
            eve_values=eve, eve_time_index=eve_idx,
            split=split, scenario=cfg)
    return bundles


def generate_eve_samples(cfg: ScenarioConfig, n: int, time_indices=None) -> list[ComplexCsi]:
    """Draw ``n`` spoofing-attacker fingerprints (correlation rho_ae to Alice)."""
    if not isinstance(n, int) or n <= 0:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    geo = ScenarioGeometry(cfg)
    if time_indices is None:
        time_indices = np.arange(n, dtype=np.int64)
    else:
        time_indices = np.asarray(time_indices, dtype=np.int64)
        if len(time_indices) != n:
            raise ValueError("time_indices length must equal n")
    values = geo.gains_to_csi(geo.eve_gains(time_indices))
    return [ComplexCsi(values[i], EVE, int(time_indices[i])) for i in range(n)]


def add_noise_array(values: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """AWGN at the requested SNR relative to the empirical signal power.

    Works on a single fingerprint or a stack; with a stack the noise power is
    set per fingerprint.
    """
    values = np.asarray(values, dtype=np.complex128)
    if math.isinf(snr_db) and snr_db > 0:
        return values.copy()
    power = np.mean(np.abs(values) ** 2, axis=(-2, -1), keepdims=True)
    if np.any(power == 0.0):
        raise DataError("zero signal power: SNR undefined for all-zero fingerprint")
    noise_var = power / (10.0 ** (snr_db / 10.0))
    w = _cgauss(rng, values.shape)
    return values + np.sqrt(noise_var) * w


def add_estimation_noise(x: ComplexCsi, snr_db: float, rng_seed: int) -> ComplexCsi:
    """Model channel-estimation error: y = x + w at the requested SNR."""
    if not x.is_noiseless:
        raise StateError(
            f"fingerprint already carries estimation noise (snr_db={x.snr_db})")
    if math.isinf(snr_db) and snr_db > 0:
        return ComplexCsi(x.values.copy(), x.identity, x.time_index,
                          snr_db=math.inf, provenance=x.provenance)
    rng = np.random.default_rng([rng_seed, _TAG_NOISE, x.time_index])
    y = add_noise_array(x.values, snr_db, rng)
    return ComplexCsi(y, x.identity, x.time_index, snr_db=float(snr_db),
                      provenance=x.provenance)


def split_dataset(bundle: DatasetBundle, fractions, *, allow_empty: bool = False,
                  ) -> tuple[DatasetBundle, DatasetBundle, DatasetBundle]:
    """Split one bundle into train/val/test by contiguous time order.

    ``fractions`` must be non-negative and sum to 1 (1e-9 tolerance).  Empty
    parts are rejected unless ``allow_empty`` is set.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ValueError("fractions must be a (train, val, test) triple")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be non-negative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = bundle.n_pairs
    order = np.argsort(bundle.time_index, kind="stable")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    sizes = (n_train, n_val, n - n_train - n_val)
    if not allow_empty and any(s == 0 for s in sizes):
        raise ValueError(f"degenerate split {sizes}; pass allow_empty=True to permit")
    parts = np.split(order, [sizes[0], sizes[0] + sizes[1]])
    names = ("train", "val", "test")
    out = []
    for name, part in zip(names, parts):
        eve_mask = np.isin(bundle.eve_time_index, bundle.time_index[part])
        out.append(DatasetBundle(
            jack_values=bundle.jack_values[part],
            alice_values=bundle.alice_values[part],
            time_index=bundle.time_index[part],
            eve_values=bundle.eve_values[eve_mask],
            eve_time_index=bundle.eve_time_index[eve_mask],
            split=name, scenario=bundle.scenario))
    return tuple(out)
