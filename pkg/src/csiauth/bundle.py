"""Dataset bundles: aligned Alice/Jack pairs plus attacker samples, with IO.

Container format (``.npz``, language-neutral):

    header            JSON string: {"format": "csiauth-bundle", "version": 1,
                       "split": ..., "shape": [A, K], "scenario": {...}}
    jack_real/imag    float64 [N, A, K]
    alice_real/imag   float64 [N, A, K]
    time_index        int64   [N]
    eve_real/imag     float64 [M, A, K]
    eve_time_index    int64   [M]
    jack_snr/alice_snr/eve_snr   float64, NaN = noiseless

External DeepMIMO-style files are ``.npz`` archives holding a complex (or
split real/imag) ``channels`` array ``[n_users, n_antennas, n_subcarriers]``;
a declarative mapping file assigns user indices to roles, e.g.::

    {"alice_users": [12, 13, ...], "jack_users": [2, 3, ...],
     "eve_users": [40, ...], "split": "test"}

Aligned positions in ``alice_users``/``jack_users`` form one pair per time
index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DatasetIOError, ShapeError
from .csi import ALICE, EVE, JACK, ComplexCsi

_FORMAT = "csiauth-bundle"
_VERSION = 1


@dataclass
class DatasetBundle:
    """Stacked fingerprint pairs aligned by time index, plus Eve samples."""

    jack_values: np.ndarray
    alice_values: np.ndarray
    time_index: np.ndarray
    eve_values: np.ndarray
    eve_time_index: np.ndarray
    split: str
    scenario: object = None
    jack_snr: np.ndarray | None = None
    alice_snr: np.ndarray | None = None
    eve_snr: np.ndarray | None = None

    def __post_init__(self):
        self.jack_values = np.asarray(self.jack_values, dtype=np.complex128)
        self.alice_values = np.asarray(self.alice_values, dtype=np.complex128)
        self.time_index = np.asarray(self.time_index, dtype=np.int64)
        self.eve_values = np.asarray(self.eve_values, dtype=np.complex128)
        self.eve_time_index = np.asarray(self.eve_time_index, dtype=np.int64)
        if self.jack_values.shape != self.alice_values.shape:
            raise ShapeError("jack/alice stacks differ: "
                             f"{self.jack_values.shape} vs {self.alice_values.shape}")
        if len(self.time_index) != len(self.jack_values):
            raise ShapeError("time_index length does not match pair count")
        if len(self.eve_time_index) != len(self.eve_values):
            raise ShapeError("eve_time_index length does not match eve count")
        for name in ("jack_snr", "alice_snr", "eve_snr"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64))

    @property
    def n_pairs(self) -> int:
        return len(self.jack_values)

    @property
    def n_eve(self) -> int:
        return len(self.eve_values)

    @property
    def fingerprint_shape(self) -> tuple[int, int]:
        return self.jack_values.shape[1:]

    def _snr_at(self, arr: np.ndarray | None, i: int) -> float | None:
        if arr is None or np.isnan(arr[i]):
            return None
        return float(arr[i])

    def pair(self, i: int) -> tuple[ComplexCsi, ComplexCsi]:
        t = int(self.time_index[i])
        jack = ComplexCsi(self.jack_values[i], JACK, t, self._snr_at(self.jack_snr, i))
        alice = ComplexCsi(self.alice_values[i], ALICE, t, self._snr_at(self.alice_snr, i))
        return jack, alice

    @property
    def pairs(self) -> list[tuple[ComplexCsi, ComplexCsi]]:
        return [self.pair(i) for i in range(self.n_pairs)]

    @property
    def eve_samples(self) -> list[ComplexCsi]:
        return [ComplexCsi(self.eve_values[i], EVE, int(self.eve_time_index[i]),
                           self._snr_at(self.eve_snr, i))
                for i in range(self.n_eve)]

    def ordered_by_time(self) -> "DatasetBundle":
        order = np.argsort(self.time_index, kind="stable")
        eve_order = np.argsort(self.eve_time_index, kind="stable")
        return DatasetBundle(
            jack_values=self.jack_values[order],
            alice_values=self.alice_values[order],
            time_index=self.time_index[order],
            eve_values=self.eve_values[eve_order],
            eve_time_index=self.eve_time_index[eve_order],
            split=self.split, scenario=self.scenario,
            jack_snr=None if self.jack_snr is None else self.jack_snr[order],
            alice_snr=None if self.alice_snr is None else self.alice_snr[order],
            eve_snr=None if self.eve_snr is None else self.eve_snr[eve_order])


def _scenario_dict(scenario) -> dict | None:
    if scenario is None:
        return None
    if isinstance(scenario, dict):
        return scenario
    return scenario.to_dict()


def save_bundle(bundle: DatasetBundle, path: str | Path) -> Path:
    """Write a bundle to the documented ``.npz`` container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": _FORMAT,
        "version": _VERSION,
        "split": bundle.split,
        "shape": list(bundle.fingerprint_shape),
        "scenario": _scenario_dict(bundle.scenario),
    }
    n, m = bundle.n_pairs, bundle.n_eve
    nan = lambda k: np.full(k, np.nan)
    np.savez(
        path,
        header=json.dumps(header, sort_keys=True),
        jack_real=bundle.jack_values.real, jack_imag=bundle.jack_values.imag,
        alice_real=bundle.alice_values.real, alice_imag=bundle.alice_values.imag,
        time_index=bundle.time_index,
        eve_real=bundle.eve_values.real, eve_imag=bundle.eve_values.imag,
        eve_time_index=bundle.eve_time_index,
        jack_snr=bundle.jack_snr if bundle.jack_snr is not None else nan(n),
        alice_snr=bundle.alice_snr if bundle.alice_snr is not None else nan(n),
        eve_snr=bundle.eve_snr if bundle.eve_snr is not None else nan(m),
    )
    return path


def load_bundle(path: str | Path) -> DatasetBundle:
    """Read a bundle container written by :func:`save_bundle`."""
    path = Path(path)
    if not path.exists():
        raise DatasetIOError("missing_file", f"no such file: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("format") != _FORMAT:
                raise DatasetIOError("bad_container",
                                     f"not a {_FORMAT} container: {path}")
            jack = z["jack_real"] + 1j * z["jack_imag"]
            alice = z["alice_real"] + 1j * z["alice_imag"]
            eve = z["eve_real"] + 1j * z["eve_imag"]
            expected = tuple(header["shape"])
            if jack.shape[1:] != expected or alice.shape[1:] != expected:
                raise DatasetIOError(
                    "shape_mismatch",
                    f"arrays {jack.shape[1:]} do not match header shape {expected}")
            def snr_or_none(a):
                return None if np.all(np.isnan(a)) else a
            return DatasetBundle(
                jack_values=jack, alice_values=alice,
                time_index=z["time_index"],
                eve_values=eve, eve_time_index=z["eve_time_index"],
                split=header.get("split", "train"),
                scenario=header.get("scenario"),
                jack_snr=snr_or_none(z["jack_snr"]),
                alice_snr=snr_or_none(z["alice_snr"]),
                eve_snr=snr_or_none(z["eve_snr"]))
    except DatasetIOError:
        raise
    except (KeyError, json.JSONDecodeError, ValueError) as exc:
        raise DatasetIOError("bad_container", f"cannot parse {path}: {exc}") from exc


def _load_mapping(mapping) -> dict:
    if isinstance(mapping, (str, Path)):
        p = Path(mapping)
        if not p.exists():
            raise DatasetIOError("missing_file", f"no such mapping file: {p}")
        text = p.read_text()
        if p.suffix in (".yml", ".yaml"):
            import yaml
            return yaml.safe_load(text)
        return json.loads(text)
    if isinstance(mapping, dict):
        return mapping
    raise DatasetIOError("bad_container", f"unsupported mapping type {type(mapping)!r}")


def load_external_dataset(path: str | Path, mapping) -> DatasetBundle:
    """Ingest an externally generated channel file under a role mapping.

    Two layouts are accepted: a native bundle container (the mapping is then
    optional and ignored), or a raw channel archive with a ``channels`` array
    indexed by the mapping's ``alice_users``/``jack_users``/``eve_users``
    lists.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetIOError("missing_file", f"no such file: {path}")
    with np.load(path, allow_pickle=False) as z:
        names = set(z.files)
        if "header" in names:
            pass  # fall through to the native loader below
        elif "channels" in names or {"channels_real", "channels_imag"} <= names:
            if "channels" in names:
                channels = np.asarray(z["channels"])
            else:
                channels = z["channels_real"] + 1j * z["channels_imag"]
            if channels.ndim != 3:
                raise DatasetIOError(
                    "shape_mismatch",
                    f"channels must be [n_users, n_antennas, n_subcarriers], "
                    f"got {channels.shape}")
            spec = _load_mapping(mapping)
            for key in ("alice_users", "jack_users"):
                if key not in spec:
                    raise DatasetIOError("bad_container", f"mapping lacks '{key}'")
            alice_idx = np.asarray(spec["alice_users"], dtype=np.int64)
            jack_idx = np.asarray(spec["jack_users"], dtype=np.int64)
            eve_idx = np.asarray(spec.get("eve_users", []), dtype=np.int64)
            if len(alice_idx) != len(jack_idx):
                raise DatasetIOError(
                    "shape_mismatch",
                    f"alice_users ({len(alice_idx)}) and jack_users "
                    f"({len(jack_idx)}) must align one pair per time index")
            n_users = channels.shape[0]
            for role, idx in (("alice_users", alice_idx), ("jack_users", jack_idx),
                              ("eve_users", eve_idx)):
                if idx.size and (idx.min() < 0 or idx.max() >= n_users):
                    raise DatasetIOError(
                        "index_out_of_range",
                        f"{role} index outside [0, {n_users}): "
                        f"{idx[(idx < 0) | (idx >= n_users)].tolist()}")
            return DatasetBundle(
                jack_values=channels[jack_idx],
                alice_values=channels[alice_idx],
                time_index=np.arange(len(alice_idx), dtype=np.int64),
                eve_values=channels[eve_idx] if eve_idx.size
                else np.zeros((0,) + channels.shape[1:], dtype=np.complex128),
                eve_time_index=np.arange(len(eve_idx), dtype=np.int64),
                split=spec.get("split", "test"),
                scenario={"source": str(path), "mapping": {
                    k: (list(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
                    for k, v in spec.items()}})
        else:
            raise DatasetIOError(
                "bad_container",
                f"{path} holds neither a bundle header nor a channels array")
    return load_bundle(path)
