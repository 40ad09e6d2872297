"""Complex CSI fingerprint container and identity labels."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, ShapeError

ALICE = "alice"
JACK = "jack"
EVE = "eve"
REFERENCE = "reference"
PREDICTED = "predicted"

IDENTITIES = (ALICE, JACK, EVE, REFERENCE)


@dataclass
class ComplexCsi:
    """One complex channel fingerprint: ``values[n_antennas, n_subcarriers]``.

    ``snr_db`` is ``None`` for noiseless ground truth and records the
    estimation SNR once noise has been applied.  ``provenance`` distinguishes
    measured fingerprints from model predictions.
    """

    values: np.ndarray
    identity: str
    time_index: int = 0
    snr_db: float | None = None
    provenance: str = "measured"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2:
            raise ShapeError(f"fingerprint must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("fingerprint contains non-finite entries")
        if self.identity not in IDENTITIES:
            raise DataError(f"unknown identity '{self.identity}'")
        if self.time_index < 0:
            raise DataError("time_index must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_noiseless(self) -> bool:
        return self.snr_db is None

    def relabel(self, identity: str, provenance: str | None = None) -> "ComplexCsi":
        return replace(self, identity=identity,
                       provenance=self.provenance if provenance is None else provenance)


def signal_power(values: np.ndarray) -> float:
    """Mean per-element power E|x|^2 of a complex array."""
    values = np.asarray(values)
    return float(np.mean(np.abs(values) ** 2))


def empirical_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Magnitude of the pooled complex Pearson correlation of two sample sets.

    ``a`` and ``b`` are ``[n_samples, ...]`` stacks of equally shaped complex
    fingerprints.  Each matrix element is centered by its own sample mean, so
    the statistic measures the co-variation of the fluctuating part and is
    insensitive to fixed geometry offsets.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ShapeError(f"sample stacks differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise DataError("need at least 2 samples for an empirical correlation")
    da = a - a.mean(axis=0, keepdims=True)
    db = b - b.mean(axis=0, keepdims=True)
    num = np.vdot(db, da)  # sum conj(db)*da
    den = np.sqrt(np.sum(np.abs(da) ** 2) * np.sum(np.abs(db) ** 2))
    if den == 0.0:
        raise DataError("zero variance: correlation undefined")
    return float(np.abs(num) / den)
