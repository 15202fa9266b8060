"""Experiment orchestration: ingest → encode → simulate → embed → train.

Every datapoint is simulated exactly once per run; uncertainty instances
only redraw split membership (classification: permuted dataset order,
timeseries: train-window subsets) and, for the sampling backend, 90%-shot
subsets — mirroring a hardware campaign where each point is measured a
single time.  Embedding artifacts are cached under a content hash of
everything that influences them, rooted at ``$RYDRES_CACHE`` (default
``.rydres-cache``); raw shot tables are regenerated rather than cached,
since they can dwarf the embeddings they reduce to.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, DatasetSpec, LearnerSpec
from .csim import crc_expectations, crc_run_program
from .datagen import make_glyphs, make_laser
from .embeddings import EmbeddingSet, embedding_labels, resample_indices
from .encoding import (Dataset, build_image_dataset, build_window_dataset,
                       program_for)
from .errors import ConfigError, DataError, NumericalError
from .io import (load_image_dir, load_mnist_pair, load_timeseries, save_json,
                 save_table)
from .kernelgeo import (DELTA_GRID, SYNTH_TEST, SYNTH_TRAIN,
                        advantage_for_delta, embedding_kernel, geometry_result)
from .qsim import (ShotTable, estimated_expectations, exact_expectations,
                   run_program, sample_bitstrings)
from .noise import realization_programs, shots_per_realization
from .seeding import (STAGE_GEOMETRY, STAGE_INSTANCE, STAGE_LEARNER,
                      STAGE_NOISE, STAGE_RESAMPLE, STAGE_SHOTS, rng_for)
from .svm import accuracy, nmse, svc_fit, svr_fit
from . import cache

REPORT_SCHEMA_VERSION = 1
SHOT_RESAMPLE_FRACTION = 0.9   # shots kept per uncertainty instance
TRAIN_KEEP_FRACTION = 0.9      # train windows kept per timeseries instance
CALIBRATION_FRACTION = 0.8     # instance-0 train share used to fit the grid

# report keys that legitimately differ between reruns of the same config;
# emission keeps them out of report.json so identical runs emit identical bytes
VOLATILE_KEYS = ("runtime_s", "cache")


def _config_echo(cfg: ExperimentConfig) -> dict:
    """The user's config as given, minus the output location — two runs of
    one experiment into different directories must emit identical reports."""
    return {k: v for k, v in cfg.raw.items() if k != "out"}


# ---------------------------------------------------------------- ingestion #


def _binary_filter(images, labels, classes):
    if classes is None:
        return images, labels
    mask = np.isin(labels, classes)
    kept = int(mask.sum())
    if kept == 0:
        raise DataError(f"no samples carry the labels {classes}")
    return images[mask], labels[mask]


def ingest(spec: DatasetSpec) -> Dataset:
    """Load or generate the configured dataset and build its base split."""
    if spec.kind == "glyphs":
        images, labels = (make_glyphs(spec.samples) if spec.gen_seed is None
                          else make_glyphs(spec.samples, seed=spec.gen_seed))
    elif spec.kind == "idx":
        images, labels = load_mnist_pair(spec.paths["images"], spec.paths["labels"])
    elif spec.kind == "pgm-dir":
        images, labels = load_image_dir(spec.paths["dir"], spec.paths["manifest"])
    elif spec.kind == "laser":
        series = (make_laser(spec.samples) if spec.gen_seed is None
                  else make_laser(spec.samples, seed=spec.gen_seed))
        return build_window_dataset(series, spec.window, spec.n_train,
                                    spec.n_test, spec.train_targets,
                                    spec.test_targets)
    elif spec.kind == "csv":
        series = load_timeseries(spec.paths["series"])
        return build_window_dataset(series, spec.window, spec.n_train,
                                    spec.n_test, spec.train_targets,
                                    spec.test_targets)
    else:  # unreachable once the config validated
        raise ConfigError(f"unknown dataset kind {spec.kind!r}")
    images, labels = _binary_filter(images, labels, spec.classes)
    return build_image_dataset(images, labels, spec.pca_dim,
                               spec.n_train, spec.n_test)


# --------------------------------------------------------------- simulation #


def _simulate_one(task):
    """One datapoint: exact backends reduce to an embedding row, the
    sampling backend returns the raw shot codes."""
    x, enc, snapshot, backend, n_shots, noise, master_seed, dp = task
    program = program_for(x, enc)
    schedule = enc.schedule(snapshot_mode=snapshot)
    obs = enc.observables()
    step = enc.step_us

    if backend in ("qrc-exact", "crc"):
        quantum = backend == "qrc-exact"
        if noise.active:
            programs = realization_programs(
                program, noise, rng_for(master_seed, STAGE_NOISE, dp),
                noise.max_realizations)
        else:
            programs = [program]
        rows = []
        for prog in programs:
            if quantum:
                rows.append(exact_expectations(
                    run_program(prog, schedule, step=step), obs).ravel())
            else:
                rows.append(crc_expectations(
                    crc_run_program(prog, schedule, step=step), obs).ravel())
        return np.mean(rows, axis=0)

    # qrc-shots: the shot budget spreads over noise realizations, and every
    # datapoint owns an independent sampling stream
    rng = rng_for(master_seed, STAGE_SHOTS, dp)
    if noise.active:
        counts = shots_per_realization(n_shots, noise.max_realizations)
        programs = realization_programs(
            program, noise, rng_for(master_seed, STAGE_NOISE, dp), len(counts))
        parts = [sample_bitstrings(run_program(prog, schedule, step=step),
                                   int(c), rng).codes
                 for prog, c in zip(programs, counts)]
        return np.concatenate(parts, axis=1)
    return sample_bitstrings(run_program(program, schedule, step=step),
                             n_shots, rng).codes


@dataclass(frozen=True)
class SimulationResult:
    """Embeddings for a whole dataset under one backend.

    ``resampled[s]`` holds the embeddings of shot-uncertainty instance s
    (a 90% shot subset per datapoint); empty for exact backends.  ``tables``
    carries the raw shots only when they were computed in this process.
    """

    embeddings: EmbeddingSet
    resampled: tuple = ()
    tables: list | None = None
    cache_key: str = ""
    cache_hit: bool = False


def _resampled_sets(tables, obs, labels, times, master_seed, n_instances):
    out = []
    for s in range(n_instances):
        rows = []
        for dp, table in enumerate(tables):
            idx = resample_indices(table.n_shots, SHOT_RESAMPLE_FRACTION,
                                   rng_for(master_seed, STAGE_RESAMPLE, s, dp))
            rows.append(estimated_expectations(table, obs, idx).ravel())
        out.append(EmbeddingSet(np.stack(rows), labels, times))
    return tuple(out)


def simulate_dataset(features: np.ndarray, cfg: ExperimentConfig,
                     jobs: int = 1) -> SimulationResult:
    """Embeddings (and, for the sampling backend, shot tables) for every row."""
    enc = cfg.encoding
    key, parts = cache.fingerprint(cfg, features)
    if cfg.cache:
        cached = cache.load(key)
        if cached is not None:
            base, resampled = cached
            return SimulationResult(base, resampled, None, key, True)

    tasks = [(features[i], enc, cfg.snapshot_mode, cfg.backend, cfg.shots,
              cfg.noise, cfg.seed, i) for i in range(features.shape[0])]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (jobs * 4))
            results = list(pool.map(_simulate_one, tasks, chunksize=chunk))
    else:
        results = [_simulate_one(t) for t in tasks]

    obs = enc.observables()
    times = tuple(float(t) for t in enc.schedule(cfg.snapshot_mode).probe_times)
    labels = embedding_labels(obs, len(times))
    if cfg.backend == "qrc-shots":
        tables = [ShotTable(enc.n_qubits, times, codes,
                            seed_path=(STAGE_SHOTS, dp))
                  for dp, codes in enumerate(results)]
        rows = [estimated_expectations(t, obs).ravel() for t in tables]
        base = EmbeddingSet(np.stack(rows), labels, times)
        resampled = _resampled_sets(tables, obs, labels, times, cfg.seed,
                                    cfg.shot_instances)
    else:
        tables = None
        base = EmbeddingSet(np.stack(results), labels, times)
        resampled = ()
    if cfg.cache:
        cache.store(key, parts, cfg.backend, base, resampled)
    return SimulationResult(base, resampled, tables, key, False)


# ---------------------------------------------------- uncertainty instances #


@dataclass(frozen=True)
class Instance:
    """One uncertainty instance: a split draw plus an optional shot subset."""

    index: int
    data_path: tuple            # seed path of the split permutation/subset
    shot_instance: int | None   # which 90%-shot embedding variant to use


def uncertainty_instances(cfg: ExperimentConfig) -> list:
    """Shot-resample × data-resample grid (data only for exact backends)."""
    instances = []
    if cfg.backend == "qrc-shots":
        for d in range(cfg.data_instances):
            for s in range(cfg.shot_instances):
                instances.append(Instance(len(instances),
                                          (STAGE_INSTANCE, d), s))
    else:
        for d in range(cfg.data_instances):
            instances.append(Instance(d, (STAGE_INSTANCE, d), None))
    return instances


def instance_split(ds: Dataset, data_path: tuple, master_seed: int):
    """Train/test indices of one instance.

    Classification permutes the whole dataset order and re-cuts the base
    split sizes; timeseries keeps a random ceil(90%) of the base train
    windows and never touches the test block.
    """
    rng = rng_for(master_seed, *data_path)
    if ds.task == "classification":
        n_train, n_test = len(ds.train_idx), len(ds.test_idx)
        perm = rng.permutation(ds.features.shape[0])
        return perm[:n_train], perm[n_train:n_train + n_test]
    keep = math.ceil(TRAIN_KEEP_FRACTION * len(ds.train_idx))
    sub = np.sort(rng.choice(len(ds.train_idx), size=keep, replace=False))
    return ds.train_idx[sub], ds.test_idx


# ----------------------------------------------------------------- training #


def _fit_and_score(x_train, y_train, x_test, y_test, task, c, epsilon):
    if task == "csvc":
        model = svc_fit(x_train, y_train, c=c)
        return accuracy(y_test, model.predict(x_test))
    model = svr_fit(x_train, y_train, c=c, epsilon=epsilon)
    return nmse(y_test, model.predict(x_test))


def calibrate(x, y, learner: LearnerSpec, rng) -> dict:
    """Grid search on an internal 80/20 split of one instance's train data.

    Hyperparameter combinations whose solver fails to converge are skipped;
    ties resolve to the earliest grid entry.  Classification maximizes
    accuracy, regression minimizes NMSE.
    """
    n = len(y)
    if n < 5:
        raise DataError(f"cannot calibrate on {n} training points")
    perm = rng.permutation(n)
    cut = max(1, min(n - 1, int(round(CALIBRATION_FRACTION * n))))
    fit_idx, val_idx = perm[:cut], perm[cut:]
    if learner.task == "csvc":
        combos = [(c, None) for c in learner.c_grid]
    else:
        combos = [(c, e) for c in learner.c_grid for e in learner.eps_grid]
    best = None
    for c, eps in combos:
        try:
            score = _fit_and_score(x[fit_idx], y[fit_idx], x[val_idx],
                                   y[val_idx], learner.task, c, eps)
        except NumericalError:
            continue
        goodness = score if learner.task == "csvc" else -score
        if best is None or goodness > best[0]:
            best = (goodness, c, eps)
    if best is None:
        raise NumericalError("no hyperparameter combination converged "
                             "during calibration")
    return {"c": best[1], "epsilon": best[2]}


def _metric_block(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {"values": [float(v) for v in values],
            "mean": float(arr.mean()), "std": std}


def _evaluate_instances(feature_sets, targets, ds, instances, learner,
                        hyper, master_seed):
    values = []
    for inst in instances:
        x = feature_sets(inst)
        train_idx, test_idx = instance_split(ds, inst.data_path, master_seed)
        values.append(_fit_and_score(x[train_idx], targets[train_idx],
                                     x[test_idx], targets[test_idx],
                                     learner.task, hyper["c"],
                                     hyper["epsilon"]))
    return values


# --------------------------------------------------------------- experiment #


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Full pipeline; returns the JSON-ready report."""
    t_start = time.perf_counter()
    ds = ingest(cfg.dataset)
    t_ingest = time.perf_counter()

    sim = simulate_dataset(ds.features, cfg, jobs=jobs)
    t_sim = time.perf_counter()

    instances = uncertainty_instances(cfg)

    def embeddings_for(inst):
        if inst.shot_instance is None:
            return sim.embeddings.values
        return sim.resampled[inst.shot_instance].values

    # hyperparameters are chosen once, on the first instance, and reused
    inst0 = instances[0]
    train0, _ = instance_split(ds, inst0.data_path, cfg.seed)
    cal_rng = rng_for(cfg.seed, STAGE_LEARNER)
    hyper = calibrate(embeddings_for(inst0)[train0], ds.targets[train0],
                      cfg.learner, cal_rng)
    values = _evaluate_instances(embeddings_for, ds.targets, ds, instances,
                                 cfg.learner, hyper, cfg.seed)

    # reference models on the raw (pre-reservoir) features, same protocol
    baselines = {}
    base_hyper = calibrate(ds.features[train0], ds.targets[train0],
                           cfg.learner, rng_for(cfg.seed, STAGE_LEARNER, 1))
    base_values = _evaluate_instances(lambda inst: ds.features, ds.targets,
                                      ds, instances, cfg.learner, base_hyper,
                                      cfg.seed)
    baselines["linear"] = {**_metric_block(base_values),
                           "hyperparams": base_hyper}
    if ds.task == "regression":
        naive = []
        for inst in instances:
            _, test_idx = instance_split(ds, inst.data_path, cfg.seed)
            naive.append(nmse(ds.targets[test_idx], ds.features[test_idx, -1]))
        baselines["naive"] = _metric_block(naive)

    t_train = time.perf_counter()
    metric_name = "accuracy" if ds.task == "classification" else "nmse"
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "experiment",
        "backend": cfg.backend,
        "task": ds.task,
        "metric_name": metric_name,
        "seed": cfg.seed,
        "n_instances": len(instances),
        "hyperparams": hyper,
        "instances": [{"index": inst.index,
                       "data_seed": list(inst.data_path),
                       "shot_instance": inst.shot_instance,
                       "metric": values[inst.index]}
                      for inst in instances],
        "metric": _metric_block(values),
        "baselines": baselines,
        "cache": {"enabled": cfg.cache, "hit": sim.cache_hit,
                  "key": sim.cache_key},
        "runtime_s": {"ingest": t_ingest - t_start,
                      "simulate": t_sim - t_ingest,
                      "train": t_train - t_sim,
                      "total": time.perf_counter() - t_start},
        "config": _config_echo(cfg),
    }


# --------------------------------------------------------- kernel advantage #


def _synthetic_split_sizes(n: int):
    if n >= SYNTH_TRAIN + SYNTH_TEST:
        return SYNTH_TRAIN, SYNTH_TEST
    n_train = int(round(n * SYNTH_TRAIN / (SYNTH_TRAIN + SYNTH_TEST)))
    return n_train, n - n_train


def kernel_advantage_run(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Quantum-vs-classical kernel comparison on geometry-built labels.

    Both kernels come from exact embeddings of the same dataset (quantum
    reservoir vs its classical spin twin); for each regularization value the
    geometry construction yields a label set, and both kernels train and
    test on shared random splits.  The instance pool is δ grid × splits.
    """
    if cfg.dataset.task != "classification":
        raise ConfigError("kernel advantage needs a classification dataset")
    t_start = time.perf_counter()
    ds = ingest(cfg.dataset)

    cfg_q = replace(cfg, backend="qrc-exact", shots=None)
    cfg_c = replace(cfg, backend="crc", shots=None)
    sim_q = simulate_dataset(ds.features, cfg_q, jobs=jobs)
    sim_c = simulate_dataset(ds.features, cfg_c, jobs=jobs)
    k_q = embedding_kernel(sim_q.embeddings)
    k_c = embedding_kernel(sim_c.embeddings)
    t_sim = time.perf_counter()

    n = k_q.shape[0]
    n_train, n_test = _synthetic_split_sizes(n)
    splits = []
    for d in range(cfg.data_instances):
        perm = rng_for(cfg.seed, STAGE_GEOMETRY, d).permutation(n)
        splits.append((perm[:n_train], perm[n_train:n_train + n_test]))

    per_delta = []
    diffs_pool, acc_q_pool, acc_c_pool = [], [], []
    for delta in DELTA_GRID:
        geo = geometry_result(k_q, k_c, delta)
        diffs = []
        for train_idx, test_idx in splits:
            acc_q, acc_c = advantage_for_delta(k_q, k_c, geo.labels,
                                               train_idx, test_idx)
            diffs.append(acc_q - acc_c)
            acc_q_pool.append(acc_q)
            acc_c_pool.append(acc_c)
        diffs_pool.extend(diffs)
        per_delta.append({"delta": float(delta),
                          "g": float(geo.g),
                          "mean_diff": float(np.mean(diffs))})

    per_delta_means = np.asarray([row["mean_diff"] for row in per_delta])
    sign_constant = bool(np.all(per_delta_means > 0)
                         or np.all(per_delta_means < 0))
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": "kernel-advantage",
        "seed": cfg.seed,
        "n_samples": int(n),
        "split": {"n_train": int(n_train), "n_test": int(n_test)},
        "n_deltas": len(DELTA_GRID),
        "n_splits": cfg.data_instances,
        "advantage": {**_metric_block(diffs_pool),
                      "sign_constant": sign_constant,
                      "accuracy_quantum_mean": float(np.mean(acc_q_pool)),
                      "accuracy_classical_mean": float(np.mean(acc_c_pool))},
        "per_delta": per_delta,
        "cache": {"enabled": cfg.cache,
                  "quantum": {"hit": sim_q.cache_hit, "key": sim_q.cache_key},
                  "classical": {"hit": sim_c.cache_hit, "key": sim_c.cache_key}},
        "runtime_s": {"simulate": t_sim - t_start,
                      "total": time.perf_counter() - t_start},
        "config": _config_echo(cfg),
    }
    return report


# ----------------------------------------------------------------- emission #


def emit_report(report: dict, out_dir) -> dict:
    """Write a report to disk; returns the emitted paths.

    ``report.json`` holds the reproducible content (identical configs and
    seeds emit identical bytes); wall-clock and cache details go to
    ``run.json``; the per-instance (or per-δ) table goes to a CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stable = {k: v for k, v in report.items() if k not in VOLATILE_KEYS}
    volatile = {"schema_version": REPORT_SCHEMA_VERSION}
    volatile.update({k: report[k] for k in VOLATILE_KEYS if k in report})
    save_json(out / "report.json", stable)
    save_json(out / "run.json", volatile)
    if report.get("kind") == "kernel-advantage":
        header = ["delta", "g", "mean_diff"]
        rows = [[row["delta"], row["g"], row["mean_diff"]]
                for row in report["per_delta"]]
    else:
        header = ["index", "shot_instance", report["metric_name"]]
        rows = [[inst["index"],
                 "" if inst["shot_instance"] is None else inst["shot_instance"],
                 inst["metric"]]
                for inst in report["instances"]]
    save_table(out / "instances.csv", header, rows)
    return {"report": str(out / "report.json"),
            "run": str(out / "run.json"),
            "table": str(out / "instances.csv")}
