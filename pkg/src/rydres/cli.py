"""Command-line interface.

Subcommands cover the pipeline stages (``encode``, ``simulate``, ``embed``,
``train``), the full run (``run``), the kernel comparison
(``kernel-geometry``), report rendering (``report``) and bundled dataset
emission (``make-data``).  Exit codes: 0 success, 2 config error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .config import ExperimentConfig, load_config_dict
from .datagen import make_glyphs, make_laser
from .encoding import program_for, regime_report
from .errors import ConfigError, DataError, RydresError
from .io import (load_json, save_embeddings, save_idx, save_json, save_pgm,
                 save_shot_binary, save_shot_csv, save_table, save_timeseries)
from .model import program_to_json
from .pipeline import (REPORT_SCHEMA_VERSION, emit_report, ingest,
                       kernel_advantage_run, run_experiment, simulate_dataset,
                       uncertainty_instances)


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config <json>")
    path = Path(args.config)
    try:
        payload = load_json(path)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.backend is not None:
        payload["backend"] = args.backend
        payload.pop("shots", None)
    if args.out is not None:
        payload["out"] = args.out
    return load_config_dict(payload, path.parent)


def _emit_or_print(payload: dict, out: str | None, name: str) -> None:
    if out:
        target = Path(out)
        target.mkdir(parents=True, exist_ok=True)
        save_json(target / name, payload)
        print(target / name)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()


def _backend_label(backend: str) -> str:
    return "crc" if backend == "crc" else "qrc"


# -------------------------------------------------------------- subcommands #


def cmd_encode(args) -> int:
    """Summarize the encoded programs: qubit count, scales, first program."""
    cfg = _load_config(args)
    ds = ingest(cfg.dataset)
    program = program_for(ds.features[0], cfg.encoding)
    regime = regime_report(program, cfg.encoding)
    payload = {
        "n_datapoints": int(ds.features.shape[0]),
        "n_features": int(ds.features.shape[1]),
        "n_qubits": cfg.encoding.n_qubits,
        "task": ds.task,
        "encoding": cfg.encoding.kind,
        "regime": asdict(regime),
        "first_program": program_to_json(program, frequency_unit="MHz"),
    }
    _emit_or_print(payload, cfg.out, "encode.json")
    return 0


def cmd_simulate(args) -> int:
    """Run the reservoir over every datapoint; persist shots or embeddings."""
    cfg = _load_config(args)
    ds = ingest(cfg.dataset)
    sim = simulate_dataset(ds.features, cfg, jobs=args.jobs)
    summary = {"backend": cfg.backend, "n_datapoints": int(ds.features.shape[0]),
               "n_embedding_features": int(sim.embeddings.values.shape[1]),
               "cache_hit": sim.cache_hit}
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.backend == "qrc-shots":
            if sim.tables is None:  # cache hit skipped raw sampling
                sim = simulate_dataset(ds.features,
                                       _without_cache(cfg), jobs=args.jobs)
            save_shot_binary(out / "shots.bin", sim.tables)
            save_shot_csv(out / "shots.csv", sim.tables)
            summary["shots_bin"] = str(out / "shots.bin")
            summary["shots_csv"] = str(out / "shots.csv")
        else:
            save_embeddings(out / "embeddings.csv", sim.embeddings,
                            _backend_label(cfg.backend),
                            {"seed": cfg.seed, "cache_key": sim.cache_key})
            summary["embeddings"] = str(out / "embeddings.csv")
        save_json(out / "simulate.json", summary)
        print(out / "simulate.json")
    else:
        json.dump(summary, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _without_cache(cfg: ExperimentConfig) -> ExperimentConfig:
    from dataclasses import replace
    return replace(cfg, cache=False)


def cmd_embed(args) -> int:
    """Write the embedding matrix (observable means per datapoint)."""
    cfg = _load_config(args)
    if not cfg.out:
        raise ConfigError("embed needs an output directory (--out)")
    ds = ingest(cfg.dataset)
    sim = simulate_dataset(ds.features, cfg, jobs=args.jobs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(out / "embeddings.csv", sim.embeddings,
                    _backend_label(cfg.backend),
                    {"seed": cfg.seed, "cache_key": sim.cache_key,
                     "targets": [float(t) for t in ds.targets]})
    for s, emb in enumerate(sim.resampled):
        save_embeddings(out / f"embeddings_resample_{s}.csv", emb,
                        _backend_label(cfg.backend),
                        {"seed": cfg.seed, "shot_instance": s})
    print(out / "embeddings.csv")
    return 0


def cmd_train(args) -> int:
    """Train and evaluate over all uncertainty instances; write the report."""
    cfg = _load_config(args)
    report = run_experiment(cfg, jobs=args.jobs)
    _finish_report(report, cfg)
    return 0


def cmd_run(args) -> int:
    """Full pipeline: preprocess, encode, simulate, embed, train, report."""
    return cmd_train(args)


def cmd_kernel_geometry(args) -> int:
    """Quantum-vs-classical kernel comparison over the δ grid."""
    cfg = _load_config(args)
    report = kernel_advantage_run(cfg, jobs=args.jobs)
    adv = report["advantage"]
    line = (f"advantage {adv['mean']:+.4f} +/- {adv['std']:.4f} over "
            f"{report['n_deltas']} deltas x {report['n_splits']} splits; "
            f"sign constant: {adv['sign_constant']}")
    if cfg.out:
        paths = emit_report(report, cfg.out)
        print(paths["report"])
    print(line)
    return 0


def _finish_report(report: dict, cfg: ExperimentConfig) -> None:
    block = report["metric"]
    line = (f"{report['metric_name']} {block['mean']:.4f} +/- "
            f"{block['std']:.4f} over {report['n_instances']} instances")
    if cfg.out:
        paths = emit_report(report, cfg.out)
        print(paths["report"])
    else:
        json.dump({k: v for k, v in report.items() if k != "config"},
                  sys.stdout, indent=2, sort_keys=True)
        print()
    print(line)


def cmd_report(args) -> int:
    """Render an emitted report (directory or report.json path)."""
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    report = load_json(path)
    if not isinstance(report, dict) or "schema_version" not in report:
        raise DataError(f"{path}: not a report (missing schema_version)")
    if report["schema_version"] != REPORT_SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported report schema version "
                        f"{report['schema_version']} (this build reads "
                        f"v{REPORT_SCHEMA_VERSION})")
    kind = report.get("kind", "experiment")
    print(f"kind: {kind} (schema v{report['schema_version']})")
    if kind == "kernel-advantage":
        adv = report["advantage"]
        print(f"samples: {report['n_samples']}, split "
              f"{report['split']['n_train']}/{report['split']['n_test']}")
        print(f"advantage: {adv['mean']:+.4f} +/- {adv['std']:.4f} "
              f"({report['n_deltas']} deltas x {report['n_splits']} splits)")
        print(f"sign constant across deltas: {adv['sign_constant']}")
        print(f"mean accuracy quantum {adv['accuracy_quantum_mean']:.4f} "
              f"vs classical {adv['accuracy_classical_mean']:.4f}")
    else:
        block = report["metric"]
        print(f"backend: {report['backend']}, task: {report['task']}")
        print(f"{report['metric_name']}: {block['mean']:.4f} +/- "
              f"{block['std']:.4f} over {report['n_instances']} instances")
        for name, base in sorted(report.get("baselines", {}).items()):
            print(f"baseline {name}: {base['mean']:.4f} +/- {base['std']:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if kind == "kernel-advantage":
            rows = [[r["delta"], r["g"], r["mean_diff"]]
                    for r in report["per_delta"]]
            save_table(out / "instances.csv", ["delta", "g", "mean_diff"], rows)
        else:
            rows = [[i["index"],
                     "" if i["shot_instance"] is None else i["shot_instance"],
                     i["metric"]] for i in report["instances"]]
            save_table(out / "instances.csv",
                       ["index", "shot_instance", report["metric_name"]], rows)
        print(out / "instances.csv")
    return 0


def cmd_make_data(args) -> int:
    """Write a bundled dataset to disk in a standard format."""
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "laser":
        series = (make_laser() if args.samples is None
                  else make_laser(n_points=args.samples))
        save_timeseries(out / "series.csv", series)
        print(out / "series.csv")
        return 0
    images, labels = (make_glyphs() if args.samples is None
                      else make_glyphs(args.samples))
    if args.format == "pgm":
        rows = []
        for k, (img, label) in enumerate(zip(images, labels)):
            name = f"glyph_{k:04d}.pgm"
            save_pgm(out / name, img)
            rows.append(f"{name},{int(label)}")
        (out / "labels.csv").write_text("\n".join(rows) + "\n")
        print(out / "labels.csv")
    else:
        save_idx(out / "images.idx", images)
        save_idx(out / "labels.idx", labels)
        print(out / "images.idx")
        print(out / "labels.idx")
    return 0


# ------------------------------------------------------------------- parser #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydres",
        description="Quantum reservoir computing on simulated atom arrays.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--backend",
                       help="override the backend (qrc-exact, qrc-shots:N, crc)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="simulation worker count (default 1)")
        return p

    common(sub.add_parser("encode", help="summarize encoded programs")
           ).set_defaults(func=cmd_encode)
    common(sub.add_parser("simulate", help="run the reservoir dynamics")
           ).set_defaults(func=cmd_simulate)
    common(sub.add_parser("embed", help="write embedding matrices")
           ).set_defaults(func=cmd_embed)
    common(sub.add_parser("train", help="train, evaluate, write the report")
           ).set_defaults(func=cmd_train)
    common(sub.add_parser("kernel-geometry",
                          help="quantum-vs-classical kernel comparison")
           ).set_defaults(func=cmd_kernel_geometry)
    common(sub.add_parser("run", help="full pipeline end to end")
           ).set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="render an emitted report")
    rep.add_argument("path", help="report directory or report.json")
    rep.add_argument("--out", help="also write the instance table CSV here")
    rep.set_defaults(func=cmd_report)

    mk = sub.add_parser("make-data", help="write a bundled dataset to disk")
    mk.add_argument("--kind", choices=("glyphs", "laser"), required=True)
    mk.add_argument("--samples", type=int, help="sample/point count override")
    mk.add_argument("--format", choices=("idx", "pgm"), default="idx",
                    help="glyph output format (default idx)")
    mk.add_argument("--out", help="output directory (default current)")
    mk.set_defaults(func=cmd_make_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return ConfigError.exit_code
    try:
        return args.func(args)
    except RydresError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
