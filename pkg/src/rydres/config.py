"""Experiment configuration: JSON schema, unit conversion, validation.

Config files state frequencies in plain MHz, the way one would program
hardware; loading multiplies them by 2π into the angular rad/us used by the
simulators.  Unknown keys anywhere in the file are rejected so typos fail
loudly, and every error names the JSON path it refers to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .encoding import TWO_PI, EncodingSpec
from .errors import ConfigError, DataError
from .io import load_json
from .noise import HARDWARE_NOISE, NoiseSpec
from .svm import DEFAULT_C_GRID, DEFAULT_EPS_GRID

BACKENDS = ("qrc-exact", "qrc-shots", "crc")
DATASET_KINDS = ("glyphs", "laser", "idx", "pgm-dir", "csv")
DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)

_MISSING = object()


def _take(section: dict, key: str, where: str, default=_MISSING):
    if key in section:
        return section.pop(key)
    if default is _MISSING:
        raise ConfigError(f"missing required key {where}.{key}")
    return default


def _no_leftovers(section: dict, where: str) -> None:
    if section:
        raise ConfigError(f"unknown keys in {where}: {sorted(section)}")


def _as_int(value, where: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where} must be at least {minimum}, got {value}")
    return value


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where} must be true or false, got {value!r}")
    return value


def _as_grid(value, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{where} must be a non-empty list of numbers")
    grid = tuple(_as_number(v, where) for v in value)
    if min(grid) <= 0:
        raise ConfigError(f"{where} entries must be positive")
    return grid


def parse_backend(text: str, shots=None):
    """Split a backend name, accepting the compact ``qrc-shots:N`` form."""
    if not isinstance(text, str):
        raise ConfigError(f"backend must be a string, got {text!r}")
    name = text
    if ":" in text:
        name, _, tail = text.partition(":")
        if shots is not None:
            raise ConfigError("shots given both inline and as a key")
        try:
            shots = int(tail)
        except ValueError:
            raise ConfigError(f"backend shot count is not an integer: "
                              f"{tail!r}") from None
    if name not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}, got {name!r}")
    if name == "qrc-shots":
        if shots is None:
            raise ConfigError("backend qrc-shots needs a shot count "
                              "(key 'shots' or 'qrc-shots:N')")
        shots = _as_int(shots, "shots", minimum=1)
    elif shots is not None:
        raise ConfigError(f"backend {name} does not take a shot count")
    return name, shots


# ------------------------------------------------------------ dataset spec #


@dataclass(frozen=True)
class DatasetSpec:
    """What data to load or generate and how to split it."""

    kind: str
    task: str  # classification | regression
    n_train: int = 0
    n_test: int = 0
    pca_dim: int | None = None
    window: int | None = None
    classes: tuple | None = None
    samples: int | None = None
    gen_seed: int | None = None
    paths: dict = field(default_factory=dict)
    train_targets: tuple | None = None
    test_targets: tuple | None = None

    @property
    def n_features(self) -> int:
        return self.pca_dim if self.task == "classification" else self.window


def _parse_range(value, where: str):
    if value is None:
        return None
    if (not isinstance(value, (list, tuple)) or len(value) != 2):
        raise ConfigError(f"{where} must be [first, last]")
    lo, hi = (_as_int(v, where, minimum=0) for v in value)
    if hi < lo:
        raise ConfigError(f"{where}: last {hi} precedes first {lo}")
    return (lo, hi)


def _resolve(path_text, where: str, base_dir: Path) -> str:
    if not isinstance(path_text, str) or not path_text:
        raise ConfigError(f"{where} must be a file path")
    path = Path(path_text)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"{where}: referenced file does not exist: {path}")
    return str(path)


def _parse_dataset(section, base_dir: Path) -> DatasetSpec:
    where = "dataset"
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    section = dict(section)
    kind = _take(section, "kind", where)
    if kind not in DATASET_KINDS:
        raise ConfigError(f"{where}.kind must be one of {DATASET_KINDS}, "
                          f"got {kind!r}")
    image_kind = kind in ("glyphs", "idx", "pgm-dir")
    task = "classification" if image_kind else "regression"

    paths = {}
    if kind == "idx":
        paths["images"] = _resolve(_take(section, "images", where), f"{where}.images", base_dir)
        paths["labels"] = _resolve(_take(section, "labels", where), f"{where}.labels", base_dir)
    elif kind == "pgm-dir":
        paths["dir"] = _resolve(_take(section, "dir", where), f"{where}.dir", base_dir)
        paths["manifest"] = _resolve(_take(section, "manifest", where), f"{where}.manifest", base_dir)
    elif kind == "csv":
        paths["series"] = _resolve(_take(section, "series", where), f"{where}.series", base_dir)

    samples = gen_seed = None
    if kind in ("glyphs", "laser"):
        default_samples = 1200 if kind == "glyphs" else 2120
        samples = _as_int(_take(section, "samples", where, default_samples),
                          f"{where}.samples", minimum=2)
        gen_seed = _take(section, "gen_seed", where, None)
        if gen_seed is not None:
            gen_seed = _as_int(gen_seed, f"{where}.gen_seed", minimum=0)

    pca_dim = window = None
    classes = train_targets = test_targets = None
    if image_kind:
        pca_dim = _as_int(_take(section, "pca_dim", where), f"{where}.pca_dim",
                          minimum=1)
        classes = _take(section, "classes", where, None)
        if classes is not None:
            if not isinstance(classes, (list, tuple)) or len(classes) != 2:
                raise ConfigError(f"{where}.classes must list exactly 2 labels")
            classes = tuple(_as_int(c, f"{where}.classes", minimum=0)
                            for c in classes)
        n_train = _as_int(_take(section, "n_train", where), f"{where}.n_train", 1)
        n_test = _as_int(_take(section, "n_test", where), f"{where}.n_test", 1)
    else:
        window = _as_int(_take(section, "window", where), f"{where}.window",
                         minimum=1)
        train_targets = _parse_range(_take(section, "train_targets", where, None),
                                     f"{where}.train_targets")
        test_targets = _parse_range(_take(section, "test_targets", where, None),
                                    f"{where}.test_targets")
        if (train_targets is None) != (test_targets is None):
            raise ConfigError(f"{where}: give both train_targets and "
                              f"test_targets, or neither")
        if train_targets is None:
            n_train = _as_int(_take(section, "n_train", where), f"{where}.n_train", 1)
            n_test = _as_int(_take(section, "n_test", where), f"{where}.n_test", 1)
        else:
            n_train = n_test = 0
    _no_leftovers(section, where)
    return DatasetSpec(kind=kind, task=task, n_train=n_train, n_test=n_test,
                       pca_dim=pca_dim, window=window, classes=classes,
                       samples=samples, gen_seed=gen_seed, paths=paths,
                       train_targets=train_targets, test_targets=test_targets)


# ----------------------------------------------------------- encoding spec #

_MHZ_FIELDS = {  # config key (plain MHz) -> EncodingSpec field (rad/us)
    "rabi_mhz": "rabi",
    "delta_g_mhz": "delta_g",
    "delta_l_max_mhz": "delta_l_max",
    "encode_max_mhz": "encode_max",
}


def _parse_encoding(section, n_features: int) -> EncodingSpec:
    where = "encoding"
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    section = dict(section)
    kind = _take(section, "method", where)
    kwargs = {"kind": kind, "n_features": n_features}

    declared = _take(section, "n_features", where, None)
    if declared is not None and declared != n_features:
        raise ConfigError(f"{where}.n_features = {declared} but the dataset "
                          f"provides {n_features} features per point")

    for key, target in _MHZ_FIELDS.items():
        if key in section:
            kwargs[target] = _as_number(section.pop(key), f"{where}.{key}") * TWO_PI
    for key in ("d0_um", "lam", "dy_um", "probe_dt", "ramp", "min_gap_um",
                "step_us"):
        if key in section:
            kwargs[key] = _as_number(section.pop(key), f"{where}.{key}")
    for key in ("n_probes", "n_qubits"):
        if key in section:
            kwargs[key] = _as_int(section.pop(key), f"{where}.{key}", minimum=1)
    if "geometry" in section:
        kwargs["geometry"] = section.pop("geometry")
    if "grid_shape" in section:
        shape = section.pop("grid_shape")
        if not isinstance(shape, (list, tuple)) or len(shape) != 2:
            raise ConfigError(f"{where}.grid_shape must be [rows, cols]")
        kwargs["grid_shape"] = tuple(_as_int(v, f"{where}.grid_shape", 1)
                                     for v in shape)
    if "round_positions" in section:
        kwargs["round_positions"] = _as_bool(section.pop("round_positions"),
                                             f"{where}.round_positions")
    if "irregular_gaps_um" in section:
        gaps = section.pop("irregular_gaps_um")
        if not isinstance(gaps, (list, tuple)):
            raise ConfigError(f"{where}.irregular_gaps_um must be a list")
        kwargs["irregular_gaps_um"] = tuple(
            _as_number(g, f"{where}.irregular_gaps_um") for g in gaps)
    _no_leftovers(section, where)
    return EncodingSpec(**kwargs)


# -------------------------------------------------------------- noise spec #


def _parse_noise(section) -> NoiseSpec:
    where = "noise"
    if section is None:
        return NoiseSpec()
    if section == "hardware":
        return HARDWARE_NOISE
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object or the string 'hardware'")
    section = dict(section)
    kwargs = {}
    for key in ("position_jitter_um", "detuning_rel"):
        if key in section:
            kwargs[key] = _as_number(section.pop(key), f"{where}.{key}")
    if "symmetric_positions" in section:
        kwargs["symmetric_positions"] = _as_bool(section.pop("symmetric_positions"),
                                                 f"{where}.symmetric_positions")
    if "max_realizations" in section:
        kwargs["max_realizations"] = _as_int(section.pop("max_realizations"),
                                             f"{where}.max_realizations", 1)
    _no_leftovers(section, where)
    return NoiseSpec(**kwargs)


# ------------------------------------------------------------ learner spec #


@dataclass(frozen=True)
class LearnerSpec:
    task: str  # csvc | esvr
    c_grid: tuple = DEFAULT_C_GRID
    eps_grid: tuple = DEFAULT_EPS_GRID
    gamma_grid: tuple = DEFAULT_GAMMA_GRID


def _parse_learner(section, dataset_task: str) -> LearnerSpec:
    where = "learner"
    default_task = "csvc" if dataset_task == "classification" else "esvr"
    if section is None:
        return LearnerSpec(task=default_task)
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    section = dict(section)
    task = _take(section, "task", where, "auto")
    if task == "auto":
        task = default_task
    if task not in ("csvc", "esvr"):
        raise ConfigError(f"{where}.task must be csvc, esvr or auto, got {task!r}")
    if task == "csvc" and dataset_task == "regression":
        raise ConfigError(f"{where}.task csvc cannot learn a regression dataset")
    if task == "esvr" and dataset_task == "classification":
        raise ConfigError(f"{where}.task esvr cannot learn a classification dataset")
    kwargs = {"task": task}
    for key in ("c_grid", "eps_grid", "gamma_grid"):
        if key in section:
            kwargs[key] = _as_grid(section.pop(key), f"{where}.{key}")
    _no_leftovers(section, where)
    return LearnerSpec(**kwargs)


# -------------------------------------------------------- experiment config #


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description, units already angular."""

    seed: int
    backend: str
    shots: int | None
    dataset: DatasetSpec
    encoding: EncodingSpec
    snapshot_mode: bool
    noise: NoiseSpec
    learner: LearnerSpec
    data_instances: int
    shot_instances: int
    cache: bool
    out: str | None
    raw: dict  # the parsed JSON, echoed into reports

    @property
    def n_instances(self) -> int:
        if self.backend == "qrc-shots":
            return self.data_instances * self.shot_instances
        return self.data_instances


def load_config_dict(payload: dict, base_dir=".") -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    raw = payload
    payload = dict(payload)
    base_dir = Path(base_dir)

    version = _take(payload, "schema_version", "config", 1)
    if version != 1:
        raise ConfigError(f"unsupported schema_version {version}")
    seed = _as_int(_take(payload, "seed", "config"), "seed", minimum=0)
    backend, shots = parse_backend(_take(payload, "backend", "config"),
                                   _take(payload, "shots", "config", None))
    dataset = _parse_dataset(_take(payload, "dataset", "config"), base_dir)
    encoding = _parse_encoding(_take(payload, "encoding", "config"),
                               dataset.n_features)
    snapshot_mode = _as_bool(_take(payload, "snapshot_mode", "config", False),
                             "snapshot_mode")
    noise = _parse_noise(_take(payload, "noise", "config", None))
    learner = _parse_learner(_take(payload, "learner", "config", None),
                             dataset.task)

    uncertainty = _take(payload, "uncertainty", "config", None)
    data_instances, shot_instances = 5, 5
    if uncertainty is not None:
        if not isinstance(uncertainty, dict):
            raise ConfigError("uncertainty must be an object")
        uncertainty = dict(uncertainty)
        data_instances = _as_int(_take(uncertainty, "data_instances",
                                       "uncertainty", 5),
                                 "uncertainty.data_instances", minimum=1)
        shot_instances = _as_int(_take(uncertainty, "shot_instances",
                                       "uncertainty", 5),
                                 "uncertainty.shot_instances", minimum=1)
        _no_leftovers(uncertainty, "uncertainty")

    cache = _as_bool(_take(payload, "cache", "config", True), "cache")
    out = _take(payload, "out", "config", None)
    if out is not None and (not isinstance(out, str) or not out):
        raise ConfigError("out must be a non-empty path string")
    _no_leftovers(payload, "config")
    return ExperimentConfig(seed=seed, backend=backend, shots=shots,
                            dataset=dataset, encoding=encoding,
                            snapshot_mode=snapshot_mode, noise=noise,
                            learner=learner, data_instances=data_instances,
                            shot_instances=shot_instances, cache=cache,
                            out=out, raw=raw)


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config JSON file."""
    try:
        payload = load_json(path)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    return load_config_dict(payload, Path(path).parent)
