"""Complex fingerprints <-> normalized two-plane images.

The real and imaginary components are treated as two image planes.  Their
dynamic ranges (max - min) are compared and the larger one becomes a common
scale factor, so the relative amplitude of the two components - and with it
the phase structure - survives the mapping.  Each plane is centered at its
own midpoint, guaranteeing both planes land inside [-1, 1] while the
wider-range plane spans it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .csi import ComplexCsi
from .errors import DataError, ShapeError, StateError


@dataclass(frozen=True)
class NormalizationMeta:
    """Invertible record of one normalization: shared range, per-plane mids."""

    range_common: float
    mid_real: float
    mid_imag: float
    degenerate: bool = False

    def __post_init__(self):
        if self.range_common <= 0:
            raise DataError(f"range_common must be positive, got {self.range_common}")

    def to_tuple(self) -> tuple[float, float, float, float]:
        return (self.range_common, self.mid_real, self.mid_imag, float(self.degenerate))

    @staticmethod
    def from_tuple(t) -> "NormalizationMeta":
        return NormalizationMeta(float(t[0]), float(t[1]), float(t[2]), bool(t[3]))


@dataclass
class FingerprintImage:
    """Normalized fingerprint: ``planes[2, n_antennas, n_subcarriers]``.

    Plane 0 is the real part, plane 1 the imaginary part.  ``meta`` suffices
    for exact inversion; identity labels ride along from the source CSI.
    """

    planes: np.ndarray
    meta: NormalizationMeta | None
    identity: str = "alice"
    time_index: int = 0
    snr_db: float | None = None

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != 2:
            raise ShapeError(f"planes must be [2, H, W], got {self.planes.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.planes.shape


def compute_meta(x: np.ndarray) -> NormalizationMeta:
    """Normalization metadata of one complex matrix (Fig.-style common range)."""
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot normalize non-finite fingerprint")
    re, im = x.real, x.imag
    range_re = float(re.max() - re.min())
    range_im = float(im.max() - im.min())
    range_common = max(range_re, range_im)
    degenerate = range_common == 0.0
    if degenerate:
        range_common = 1.0
    return NormalizationMeta(
        range_common=range_common,
        mid_real=float((re.max() + re.min()) / 2.0),
        mid_imag=float((im.max() + im.min()) / 2.0),
        degenerate=degenerate)


def normalize_values(x: np.ndarray, meta: NormalizationMeta) -> np.ndarray:
    """Apply the linear map v -> 2*(v - mid)/range_common plane-wise."""
    x = np.asarray(x)
    scale = 2.0 / meta.range_common
    return np.stack([(x.real - meta.mid_real) * scale,
                     (x.imag - meta.mid_imag) * scale])


def denormalize_values(planes: np.ndarray, meta: NormalizationMeta) -> np.ndarray:
    """Exact inverse of :func:`normalize_values`."""
    planes = np.asarray(planes)
    half_range = meta.range_common / 2.0
    return ((meta.mid_real + planes[0] * half_range)
            + 1j * (meta.mid_imag + planes[1] * half_range))


def normalize(x: ComplexCsi, meta: NormalizationMeta | None = None) -> FingerprintImage:
    """Convert a CSI fingerprint to its normalized two-plane image.

    With ``meta=None`` (per-sample mode) the fingerprint's own statistics are
    used and the wider-range plane spans [-1, 1] exactly; a caller-supplied
    ``meta`` (condition-meta or per-dataset modes) is applied verbatim.
    """
    own = meta is None
    if own:
        meta = compute_meta(x.values)
    planes = normalize_values(x.values, meta)
    return FingerprintImage(planes, meta, identity=x.identity,
                            time_index=x.time_index, snr_db=x.snr_db)


def denormalize(img: FingerprintImage, identity: str | None = None,
                provenance: str = "measured") -> ComplexCsi:
    """Map a normalized image back to a complex CSI fingerprint."""
    if img.meta is None:
        raise StateError("image carries no normalization metadata")
    values = denormalize_values(img.planes, img.meta)
    return ComplexCsi(values, identity or img.identity, img.time_index,
                      snr_db=img.snr_db, provenance=provenance)


def dataset_meta(stacks: list[np.ndarray]) -> NormalizationMeta:
    """One shared meta covering every fingerprint in the given stacks."""
    re_min = min(float(s.real.min()) for s in stacks if s.size)
    re_max = max(float(s.real.max()) for s in stacks if s.size)
    im_min = min(float(s.imag.min()) for s in stacks if s.size)
    im_max = max(float(s.imag.max()) for s in stacks if s.size)
    range_common = max(re_max - re_min, im_max - im_min)
    degenerate = range_common == 0.0
    return NormalizationMeta(
        range_common=1.0 if degenerate else range_common,
        mid_real=(re_max + re_min) / 2.0,
        mid_imag=(im_max + im_min) / 2.0,
        degenerate=degenerate)


def batchify(items: list[FingerprintImage]) -> tuple[np.ndarray, list[NormalizationMeta]]:
    """Stack images into one ``[B, 2, H, W]`` array, order preserved."""
    if not items:
        raise ValueError("cannot batchify an empty list")
    shape = items[0].shape
    for i, item in enumerate(items):
        if item.shape != shape:
            raise ShapeError(f"item {i} has shape {item.shape}, expected {shape}")
    batch = np.stack([item.planes for item in items])
    return batch, [item.meta for item in items]


def unbatchify(batch: np.ndarray, metas: list[NormalizationMeta],
               like: list[FingerprintImage] | None = None) -> list[FingerprintImage]:
    """Inverse of :func:`batchify`; ``like`` restores identity labels."""
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[0] != len(metas):
        raise ShapeError(f"batch {batch.shape} does not match {len(metas)} metas")
    out = []
    for i in range(batch.shape[0]):
        if like is not None:
            src = like[i]
            out.append(FingerprintImage(batch[i], metas[i], identity=src.identity,
                                        time_index=src.time_index, snr_db=src.snr_db))
        else:
            out.append(FingerprintImage(batch[i], metas[i]))
    return out


def normalize_batch(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-sample normalization of a complex stack ``[B, H, W]``.

    Returns ``(planes [B, 2, H, W], metas [B, 4])`` with meta rows
    ``(range_common, mid_real, mid_imag, degenerate)``.
    """
    values = np.asarray(values, dtype=np.complex128)
    if not np.all(np.isfinite(values)):
        raise DataError("cannot normalize non-finite fingerprints")
    re, im = values.real, values.imag
    re_max, re_min = re.max(axis=(1, 2)), re.min(axis=(1, 2))
    im_max, im_min = im.max(axis=(1, 2)), im.min(axis=(1, 2))
    range_common = np.maximum(re_max - re_min, im_max - im_min)
    degenerate = range_common == 0.0
    range_common = np.where(degenerate, 1.0, range_common)
    mid_re = (re_max + re_min) / 2.0
    mid_im = (im_max + im_min) / 2.0
    scale = (2.0 / range_common)[:, None, None]
    planes = np.stack([(re - mid_re[:, None, None]) * scale,
                       (im - mid_im[:, None, None]) * scale], axis=1)
    metas = np.stack([range_common, mid_re, mid_im, degenerate.astype(float)], axis=1)
    return planes, metas


def denormalize_batch(planes: np.ndarray, metas: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`normalize_batch` (or stored meta rows)."""
    planes = np.asarray(planes)
    metas = np.asarray(metas)
    half = (metas[:, 0] / 2.0)[:, None, None]
    return ((metas[:, 1][:, None, None] + planes[:, 0] * half)
            + 1j * (metas[:, 2][:, None, None] + planes[:, 1] * half))
