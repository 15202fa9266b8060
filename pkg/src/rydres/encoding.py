"""Feature preprocessing and the three data-to-program encodings.

Preprocessing: PCA (top eigenvectors of the train covariance), unit-interval
rescaling with train statistics, sliding windows for timeseries, block
downscaling for images.  All encoders consume feature vectors in [0, 1].

Encodings:

* position: features modulate nearest-neighbor gaps of a chain (or the
  horizontal gaps of a grid), gap_i = d0 * (1 + lam * x_i)^(-1/6), so the
  interaction on bond i is V0 * (1 + lam * x_i);
* local: features set site weights of a constant local detuning,
  Delta_l[i] = delta_l_max * x_i, on a regular chain;
* pulse: features trace a piecewise-linear global detuning waveform on a
  fixed (optionally irregular) chain, one segment per feature with the last
  segment held constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .model import (AtomArray, POSITION_GRID_UM, ProbeSchedule,
                    RydbergProgram, Waveform, interaction_matrix)
from .qsim import ObservableSpec

TWO_PI = 2.0 * math.pi


# ------------------------------------------------------------ preprocessing #


@dataclass(frozen=True, eq=False)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # (d_out, d_in) rows, orthonormal
    explained_variance: np.ndarray


def pca_fit(x: np.ndarray, d_out: int) -> PCAModel:
    """Top-d_out eigenvectors of the sample covariance of x (n, d_in).

    Component signs are fixed by making each row's largest-magnitude entry
    positive, so results do not depend on eigensolver sign conventions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError(f"PCA needs a (n>=2, d) matrix, got shape {x.shape}")
    if not 1 <= d_out <= min(x.shape):
        raise DataError(f"PCA dimension {d_out} out of range for shape {x.shape}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_out]
    comps = evecs[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAModel(mean, comps, np.maximum(evals[order], 0.0))


def pca_transform(model: PCAModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - model.mean) @ model.components.T


@dataclass(frozen=True, eq=False)
class UnitScaler:
    """Per-feature affine map onto [0, 1] from train min/max; clips outside."""

    lo: np.ndarray
    span: np.ndarray

    @staticmethod
    def fit(x: np.ndarray) -> "UnitScaler":
        x = np.asarray(x, dtype=np.float64)
        lo = x.min(axis=0)
        span = x.max(axis=0) - lo
        span = np.where(span > 0, span, 1.0)  # constant feature -> maps to 0
        return UnitScaler(lo, span)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=np.float64) - self.lo) / self.span, 0.0, 1.0)


def sliding_windows(series: np.ndarray, width: int):
    """(n - width, width) windows and one-step-ahead targets series[width:]."""
    s = np.asarray(series, dtype=np.float64).ravel()
    if width < 1 or s.size <= width:
        raise DataError(f"series of length {s.size} cannot give windows of width {width}")
    idx = np.arange(width)[None, :] + np.arange(s.size - width)[:, None]
    return s[idx], s[width:].copy()


def downscale_images(images: np.ndarray, out_shape: tuple,
                     per_image_norm: bool = True) -> np.ndarray:
    """Block-average (n, H, W) images to (n, h, w); H, W must be divisible.

    ``per_image_norm`` rescales each image by its own maximum so every
    downscaled image uses the full [0, 1] range (all-zero images stay zero).
    """
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.ndim != 3:
        raise DataError(f"expected (n, H, W) images, got shape {imgs.shape}")
    n, big_h, big_w = imgs.shape
    h, w = out_shape
    if big_h % h or big_w % w:
        raise DataError(f"cannot block-average {big_h}x{big_w} to {h}x{w}")
    out = imgs.reshape(n, h, big_h // h, w, big_w // w).mean(axis=(2, 4))
    if per_image_norm:
        peak = out.max(axis=(1, 2), keepdims=True)
        out = np.where(peak > 0, out / np.where(peak > 0, peak, 1.0), 0.0)
    return out


# ----------------------------------------------------------------- datasets #


@dataclass(frozen=True, eq=False)
class Dataset:
    """Preprocessed features in [0, 1] with a base train/test split.

    Uncertainty instances permute or subset the split but reuse these
    features unchanged, mirroring hardware runs where every datapoint is
    measured once and only the split assignment is resampled.
    """

    features: np.ndarray  # (n, d) in [0, 1]
    targets: np.ndarray
    task: str  # "classification" | "regression"
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise DataError(f"features must be 2D, got shape {feats.shape}")
        if np.any(feats < -1e-9) or np.any(feats > 1 + 1e-9):
            raise DataError("dataset features must lie in [0, 1]")
        targets = np.asarray(self.targets)
        if targets.shape != (feats.shape[0],):
            raise DataError(f"targets shape {targets.shape} does not match "
                            f"{feats.shape[0]} datapoints")
        if self.task not in ("classification", "regression"):
            raise DataError(f"task must be classification or regression, got {self.task!r}")
        if self.task == "classification":
            targets = targets.astype(np.int64)
        else:
            targets = targets.astype(np.float64)
        tr = np.asarray(self.train_idx, dtype=np.int64)
        te = np.asarray(self.test_idx, dtype=np.int64)
        both = np.concatenate([tr, te])
        if both.size and (both.min() < 0 or both.max() >= feats.shape[0]):
            raise DataError("split indices out of range")
        if np.intersect1d(tr, te).size:
            raise DataError("train and test indices overlap")
        for name, arr in (("features", np.clip(feats, 0.0, 1.0)), ("targets", targets),
                          ("train_idx", tr), ("test_idx", te)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_points(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])


def build_image_dataset(images: np.ndarray, labels: np.ndarray, pca_dim: int,
                        n_train: int, n_test: int) -> Dataset:
    """Flatten, scale to [0, 1], PCA-reduce and unit-rescale image data.

    The first n_train points (in the given order) form the base train split;
    PCA and the feature scaler are fit on those only.
    """
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.ndim != 3:
        raise DataError(f"expected (n, H, W) images, got {imgs.shape}")
    n = imgs.shape[0]
    if n_train + n_test > n:
        raise DataError(f"split {n_train}+{n_test} exceeds {n} images")
    flat = imgs.reshape(n, -1)
    peak = flat.max()
    if peak > 0:
        flat = flat / peak
    train = np.arange(n_train)
    test = np.arange(n_train, n_train + n_test)
    pca = pca_fit(flat[train], pca_dim)
    reduced = pca_transform(pca, flat)
    scaler = UnitScaler.fit(reduced[train])
    return Dataset(scaler.transform(reduced), labels[:n], "classification", train, test)


def build_window_dataset(series: np.ndarray, width: int, n_train: int, n_test: int,
                         train_targets: tuple | None = None,
                         test_targets: tuple | None = None) -> Dataset:
    """Sliding-window one-step-ahead dataset, scaled by train statistics.

    Default split: the first n_train windows train, the next n_test test.
    ``train_targets``/``test_targets`` instead select windows whose target
    index (position in the raw series) falls in the given inclusive range.
    """
    feats, targets = sliding_windows(series, width)
    n_windows = feats.shape[0]
    if train_targets is not None or test_targets is not None:
        if train_targets is None or test_targets is None:
            raise DataError("give both train_targets and test_targets, or neither")
        tidx = np.arange(width, width + n_windows)  # target index of each window
        train = np.flatnonzero((tidx >= train_targets[0]) & (tidx <= train_targets[1]))
        test = np.flatnonzero((tidx >= test_targets[0]) & (tidx <= test_targets[1]))
        if not train.size or not test.size:
            raise DataError("target ranges select no windows")
    else:
        if n_train + n_test > n_windows:
            raise DataError(f"split {n_train}+{n_test} exceeds {n_windows} windows")
        train = np.arange(n_train)
        test = np.arange(n_train, n_train + n_test)
    lo = feats[train].min()
    hi = max(feats[train].max(), targets[train].max())
    span = hi - lo if hi > lo else 1.0
    scale = lambda v: np.clip((v - lo) / span, 0.0, 1.0)
    return Dataset(scale(feats), scale(targets), "regression", train, test)


# ------------------------------------------------------------- encoding spec #


_KINDS = ("position", "local", "pulse")


@dataclass(frozen=True)
class EncodingSpec:
    """Physical parameters of one encoding; frequencies in rad/us.

    ``n_features`` is the encoded feature dimension: a position chain uses
    n_features + 1 atoms, local uses one atom per feature, pulse uses
    ``n_qubits`` atoms regardless of the feature count.
    """

    kind: str
    n_features: int
    n_qubits: int = 0  # pulse only; derived for position/local
    geometry: str = "chain"
    grid_shape: tuple | None = None  # (ny, nx) for 2D position encoding
    d0_um: float = 10.0
    lam: float = 3.0
    dy_um: float = 10.0
    rabi: float = TWO_PI
    delta_g: float = TWO_PI
    delta_l_max: float = -8.0 * TWO_PI
    encode_max: float = 12.0 * TWO_PI
    n_probes: int = 5
    probe_dt: float = 0.5
    ramp: float = 0.05
    round_positions: bool = True
    min_gap_um: float = 4.0
    irregular_gaps_um: tuple | None = None
    step_us: float | None = None  # integration step override (None: automatic)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"encoding kind must be one of {_KINDS}, got {self.kind!r}")
        if self.step_us is not None and self.step_us <= 0:
            raise ConfigError(f"step_us must be positive, got {self.step_us}")
        if self.n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {self.n_features}")
        if self.kind == "position":
            if self.geometry == "grid":
                if self.grid_shape is None:
                    raise ConfigError("grid position encoding needs grid_shape=(ny, nx)")
                ny, nx = self.grid_shape
                if ny * (nx - 1) != self.n_features:
                    raise ConfigError(f"grid {self.grid_shape} encodes {ny * (nx - 1)} "
                                      f"features, got {self.n_features}")
                object.__setattr__(self, "n_qubits", ny * nx)
            else:
                object.__setattr__(self, "n_qubits", self.n_features + 1)
            if self.lam <= -1:
                raise ConfigError(f"lam must exceed -1, got {self.lam}")
            tight = self.d0_um * (1.0 + max(self.lam, 0.0)) ** (-1.0 / 6.0)
            if tight < self.min_gap_um:
                raise ConfigError(f"position encoding can reach gap {tight:.2f} um, below "
                                  f"the {self.min_gap_um} um minimum")
        elif self.kind == "local":
            object.__setattr__(self, "n_qubits", self.n_features)
        else:  # pulse
            if self.n_qubits < 1:
                raise ConfigError("pulse encoding needs an explicit n_qubits")
            if self.irregular_gaps_um is not None:
                gaps = tuple(float(g) for g in self.irregular_gaps_um)
                if len(gaps) != self.n_qubits - 1:
                    raise ConfigError(f"{self.n_qubits}-qubit chain needs "
                                      f"{self.n_qubits - 1} gaps, got {len(gaps)}")
                if min(gaps) < self.min_gap_um:
                    raise ConfigError(f"irregular gap {min(gaps):.2f} um below minimum")
                object.__setattr__(self, "irregular_gaps_um", gaps)
        if self.n_probes < 1 or self.probe_dt <= 0:
            raise ConfigError("need n_probes >= 1 and probe_dt > 0")
        if self.d0_um < self.min_gap_um:
            raise ConfigError(f"base gap {self.d0_um} um below the {self.min_gap_um} um minimum")

    @property
    def total_time(self) -> float:
        return self.n_probes * self.probe_dt

    def schedule(self, snapshot_mode: bool = False, include_rampdown: bool = True) -> ProbeSchedule:
        return ProbeSchedule.uniform(self.n_probes, self.probe_dt, ramp=self.ramp,
                                     snapshot_mode=snapshot_mode,
                                     include_rampdown=include_rampdown)

    def observables(self) -> ObservableSpec:
        return ObservableSpec.auto(self.n_qubits, self.geometry, self.grid_shape)


def _check_features(x, spec: EncodingSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (spec.n_features,):
        raise DataError(f"expected {spec.n_features} features, got {x.shape}")
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise DataError(f"features must lie in [0, 1], got range "
                        f"[{x.min():.3g}, {x.max():.3g}]")
    return np.clip(x, 0.0, 1.0)


def _snap(v: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    if spec.round_positions:
        return np.round(v / POSITION_GRID_UM) * POSITION_GRID_UM
    return v


# ---------------------------------------------------------------- encoders #


def encode_position(x, spec: EncodingSpec) -> AtomArray:
    """Geometry whose bond interactions are V0 * (1 + lam * x_i)."""
    if spec.kind != "position":
        raise ConfigError(f"encode_position needs a position spec, got {spec.kind!r}")
    x = _check_features(x, spec)
    gaps = spec.d0_um * (1.0 + spec.lam * x) ** (-1.0 / 6.0)
    if spec.geometry == "grid":
        ny, nx = spec.grid_shape
        rows = []
        for r in range(ny):
            g = gaps[r * (nx - 1):(r + 1) * (nx - 1)]
            xs = _snap(np.concatenate([[0.0], np.cumsum(g)]), spec)
            ys = np.full(nx, r * spec.dy_um)
            rows.append(np.stack([xs, ys], axis=1))
        return AtomArray(np.concatenate(rows, axis=0), rounded=spec.round_positions)
    xs = _snap(np.concatenate([[0.0], np.cumsum(gaps)]), spec)
    return AtomArray(np.stack([xs, np.zeros_like(xs)], axis=1), rounded=spec.round_positions)


def _base_array(spec: EncodingSpec) -> AtomArray:
    if spec.kind == "pulse" and spec.irregular_gaps_um is not None:
        gaps = np.asarray(spec.irregular_gaps_um)
    else:
        gaps = np.full(spec.n_qubits - 1, spec.d0_um)
    xs = _snap(np.concatenate([[0.0], np.cumsum(gaps)]), spec)
    return AtomArray(np.stack([xs, np.zeros_like(xs)], axis=1), rounded=spec.round_positions)


def encode_local(x, spec: EncodingSpec) -> RydbergProgram:
    """Regular chain; features become local detuning weights alpha_i = x_i."""
    if spec.kind != "local":
        raise ConfigError(f"encode_local needs a local spec, got {spec.kind!r}")
    x = _check_features(x, spec)
    t = spec.total_time
    return RydbergProgram(
        array=_base_array(spec),
        rabi=Waveform.trapezoid(spec.rabi, t, spec.ramp),
        global_detuning=Waveform.constant(spec.delta_g),
        local_detuning=Waveform.constant(spec.delta_l_max),
        local_pattern=x,
        total_time=t,
    )


def encode_global_pulse(x, spec: EncodingSpec) -> RydbergProgram:
    """Fixed chain; features trace the global detuning waveform.

    d features give d equal-length segments over the program: breakpoints at
    k * dtau for k = 0..d-1 plus a final breakpoint at total_time repeating
    the last value, so the last segment is constant.
    """
    if spec.kind != "pulse":
        raise ConfigError(f"encode_global_pulse needs a pulse spec, got {spec.kind!r}")
    x = _check_features(x, spec)
    t = spec.total_time
    d = spec.n_features
    dtau = t / d
    times = np.append(np.arange(d) * dtau, t)
    values = spec.encode_max * np.append(x, x[-1])
    return RydbergProgram(
        array=_base_array(spec),
        rabi=Waveform.trapezoid(spec.rabi, t, spec.ramp),
        global_detuning=Waveform(times, values),
        total_time=t,
    )


def program_for(x, spec: EncodingSpec) -> RydbergProgram:
    """Complete program for one datapoint under any encoding kind."""
    if spec.kind == "local":
        return encode_local(x, spec)
    if spec.kind == "pulse":
        return encode_global_pulse(x, spec)
    arr = encode_position(x, spec)
    t = spec.total_time
    return RydbergProgram(
        array=arr,
        rabi=Waveform.trapezoid(spec.rabi, t, spec.ramp),
        global_detuning=Waveform.constant(spec.delta_g),
        total_time=t,
    )


# ------------------------------------------------------------ regime report #


@dataclass(frozen=True)
class RegimeReport:
    """Dynamical scales of a program and whether they are mutually balanced.

    ``in_regime`` requires every pairwise ratio of the applicable scales to
    sit within half a decade (|log10| <= 0.5).  A vanishing scale marks the
    report degenerate instead of failing.
    """

    scales: dict
    ratios: dict
    in_regime: bool
    degenerate: bool


def _bond_pairs(spec: EncodingSpec, horizontal_only: bool) -> list:
    if spec.geometry == "grid":
        ny, nx = spec.grid_shape
        pairs = [(r * nx + c, r * nx + c + 1) for r in range(ny) for c in range(nx - 1)]
        if not horizontal_only:
            pairs += [(r * nx + c, (r + 1) * nx + c) for r in range(ny - 1) for c in range(nx)]
        return pairs
    return [(i, i + 1) for i in range(spec.n_qubits - 1)]


def regime_report(program: RydbergProgram, spec: EncodingSpec) -> RegimeReport:
    """Scale balance of one encoded program (probe scale is 2 pi / dt)."""
    v = interaction_matrix(program.array, program.constants)
    scales = {
        "mixing": program.rabi.max_abs(),
        "interaction": float(np.mean([v[i, j] for i, j in _bond_pairs(spec, False)]))
        if program.n_qubits > 1 else 0.0,
        "probe": TWO_PI / spec.probe_dt,
    }
    if spec.kind == "local":
        scales["encoding"] = float(np.mean(np.abs(program.local_pattern
                                                  * program.local_detuning.max_abs())))
    elif spec.kind == "position":
        v0 = program.constants.c6 / spec.d0_um**6
        bonds = [abs(v[i, j] - v0) for i, j in _bond_pairs(spec, True)]
        scales["encoding"] = float(np.mean(bonds))
    else:
        scales["encoding"] = float(np.mean(np.abs(program.global_detuning.values)))
        dtau = spec.total_time / spec.n_features
        scales["encode_rate"] = TWO_PI / dtau

    degenerate = any(s <= 0 for s in scales.values())
    ratios = {}
    keys = sorted(scales)
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            ka, kb = keys[a], keys[b]
            if scales[ka] > 0 and scales[kb] > 0:
                ratios[f"{ka}/{kb}"] = math.log10(scales[ka] / scales[kb])
    in_regime = (not degenerate) and all(abs(r) <= 0.5 for r in ratios.values())
    return RegimeReport(scales, ratios, in_regime, degenerate)
