"""Command-line interface: one executable, JSON configs, dotted-key overrides.

Heavy modules are imported inside ``main`` so ``--deterministic`` can pin the
BLAS/OMP thread environment before numpy loads; that makes repeated runs
bitwise identical regardless of threaded GEMM scheduling.

Exit codes: 0 success, 2 configuration/usage, 3 data, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SUBCOMMANDS = ("synth", "preprocess", "train", "multirun", "compare",
               "eval", "explain", "stats")


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    command: str
    config_path: str | None
    out_dir: str
    overrides: list[str] = field(default_factory=list)
    seed: int | None = None
    profile: str | None = None
    deterministic: bool = False
    verbose: bool = False
    config: dict = field(default_factory=dict)


class _Once(argparse.Action):
    """Reject conflicting duplicate occurrences of a scalar flag."""

    def __call__(self, parser, namespace, values, option_string=None):
        seen = getattr(namespace, f"_seen_{self.dest}", False)
        if seen:
            parser.error(f"duplicate flag {option_string}")
        setattr(namespace, f"_seen_{self.dest}", True)
        setattr(namespace, self.dest, values)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pasfusion",
        description="Multimodal MRI+US classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic paired dataset and manifest",
        "preprocess": "preprocess every sample of a manifest to model grids",
        "train": "train one model per the training config",
        "multirun": "repeat training over n seeds and aggregate",
        "compare": "three-model comparative protocol on a shared paired test set",
        "eval": "evaluate a checkpoint on a manifest split",
        "explain": "emit Grad-CAM overlays for chosen samples",
        "stats": "statistical comparison report from per-run metrics",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", action=_Once, help="JSON config file")
        p.add_argument("--out", action=_Once, required=True, help="output directory")
        p.add_argument("--seed", action=_Once, type=int, help="override the config seed")
        p.add_argument("--profile", action=_Once, choices=("paper", "micro"),
                       help="override the scale profile")
        p.add_argument("--deterministic", action="store_true",
                       help="pin threading for bitwise-reproducible runs")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       dest="overrides", help="dotted-key config override (repeatable)")
        p.add_argument("--verbose", action="store_true")
    return parser


def _parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _apply_override(config: dict, path: list[str], value) -> None:
    node = config
    for part in path[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"override path {'.'.join(path)!r} not in config")
        node = node[part]
    if not isinstance(node, dict) or path[-1] not in node:
        raise ConfigError(f"override path {'.'.join(path)!r} not in config")
    node[path[-1]] = value


def parse_args(argv=None) -> CliConfig:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    config: dict = {}
    if ns.config is not None:
        try:
            config = json.loads(Path(ns.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {ns.config}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
    for item in ns.overrides:
        path, value = _parse_override(item)
        _apply_override(config, path, value)
    return CliConfig(command=ns.command, config_path=ns.config, out_dir=ns.out,
                     overrides=list(ns.overrides), seed=ns.seed,
                     profile=ns.profile, deterministic=ns.deterministic,
                     verbose=ns.verbose, config=config)


def _write_run_record(cli: CliConfig, extra: dict | None = None) -> None:
    from . import __version__

    canonical = json.dumps(cli.config, sort_keys=True).encode()
    payload = {
        "command": cli.command,
        "config_hash": hashlib.sha256(canonical).hexdigest(),
        "config": cli.config,
        "overrides": cli.overrides,
        "seed": cli.seed,
        "profile": cli.profile,
        "deterministic": cli.deterministic,
        "version": __version__,
    }
    if not cli.deterministic:
        import time
        payload["wallclock"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    if extra:
        payload.update(extra)
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(json.dumps(payload, indent=1, sort_keys=True))


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config key {key!r} is required for this command")
    return config[key]


# -- command implementations ---------------------------------------------------

def _cmd_synth(cli: CliConfig) -> int:
    from .datapipe import stratified_split
    from .synthgen import SynthSpec, generate_dataset

    cfg = dict(cli.config)
    split_ratios = cfg.pop("split_ratios", None)
    split_seed = cfg.pop("split_seed", 0)
    if cli.seed is not None:
        cfg["seed"] = cli.seed
    if cli.profile is not None:
        cfg["profile"] = cli.profile
    try:
        spec = SynthSpec(**cfg)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}")
    manifest = generate_dataset(spec, cli.out_dir)
    if split_ratios is not None:
        stratified_split(manifest, tuple(split_ratios), split_seed)
        manifest.save(Path(cli.out_dir) / "manifest.json")
    _write_run_record(cli, {"n_pairs": spec.n_pairs})
    print(f"wrote {spec.n_pairs} pairs to {cli.out_dir}")
    return EXIT_OK


def _cmd_preprocess(cli: CliConfig) -> int:
    import numpy as np

    from .datapipe import SampleManifest, write_rimg, write_rvol
    from .models.profiles import get_profile
    from .trainer import PreprocessCache

    manifest = SampleManifest.load(_require(cli.config, "manifest"))
    profile = get_profile(cli.profile or cli.config.get("profile", "micro"))
    cache = PreprocessCache(profile)
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    renamed = {}
    for s in manifest.samples:
        stem = Path(s.uri).stem
        if s.modality == "mri":
            new_uri = str(out / f"{stem}_pp.rvol")
            write_rvol(new_uri, cache.volume(s.uri))
        else:
            new_uri = str(out / f"{stem}_pp.rimg")
            # store the mean channel; preprocessing re-expands to 3 channels
            write_rimg(new_uri, np.ascontiguousarray(cache.image(s.uri)[0]))
        renamed[s.uri] = new_uri
        s.uri = new_uri
    for p in manifest.pairing:
        p.mri = renamed.get(p.mri, p.mri)
        p.us = renamed.get(p.us, p.us)
    manifest.save(out / "manifest.json")
    _write_run_record(cli, {"n_samples": len(manifest.samples)})
    print(f"preprocessed {len(manifest.samples)} samples into {out}")
    return EXIT_OK


def _train_config_from(cli: CliConfig):
    from .trainer import SchedulerConfig, TrainConfig

    section = dict(_require(cli.config, "trainer"))
    sched = section.pop("scheduler", None)
    if isinstance(sched, dict):
        section["scheduler"] = SchedulerConfig(**sched)
    if cli.seed is not None:
        section["seed"] = cli.seed
    if cli.profile is not None:
        section["profile"] = cli.profile
    if "warm_start" in section and section["warm_start"] is not None:
        section["warm_start"] = tuple(section["warm_start"])
    try:
        return TrainConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad trainer config: {exc}")


def _epoch_csv(path, record) -> None:
    from .evalstats import write_metrics_csv

    rows = [{"epoch": i, "train_loss": tl, "val_loss": vl, "val_accuracy": va,
             "lr": lr}
            for i, (tl, vl, va, lr) in enumerate(
                zip(record.train_loss, record.val_loss, record.val_accuracy,
                    record.lr_trace))]
    write_metrics_csv(path, rows, ["epoch", "train_loss", "val_loss",
                                   "val_accuracy", "lr"])


def _cmd_train(cli: CliConfig) -> int:
    from .datapipe import SampleManifest
    from .evalstats import write_json
    from .trainer import train

    config = _train_config_from(cli)
    manifest = SampleManifest.load(_require(cli.config, "manifest"))
    record, _ctx = train(config, manifest, out_dir=cli.out_dir)
    out = Path(cli.out_dir)
    write_json(out / "record.json", record.as_dict())
    _epoch_csv(out / "epochs.csv", record)
    _write_run_record(cli, {"best_epoch": record.best_epoch,
                            "best_val_accuracy": record.best_val_accuracy})
    print(f"best val accuracy {record.best_val_accuracy:.4f} "
          f"at epoch {record.best_epoch}")
    return EXIT_OK


def _cmd_multirun(cli: CliConfig) -> int:
    from .datapipe import SampleManifest
    from .evalstats import write_json, write_metrics_csv
    from .trainer import multi_run

    config = _train_config_from(cli)
    manifest = SampleManifest.load(_require(cli.config, "manifest"))
    n_runs = int(cli.config.get("n_runs", 5))
    result = multi_run(config, manifest, n_runs=n_runs, out_dir=cli.out_dir)
    out = Path(cli.out_dir)
    write_json(out / "summary.json", {
        "summary": result["summary"], "metrics": result["metrics"],
        "records": [r.as_dict() for r in result["records"]],
    })
    columns = ["run", "accuracy", "auc", "precision", "recall", "f1"]
    rows = [dict(run=i, **m) for i, m in enumerate(result["metrics"])]
    write_metrics_csv(out / "runs.csv", rows, columns)
    _write_run_record(cli, {"n_runs": n_runs})
    acc = result["summary"]["accuracy"]
    print(f"accuracy best {acc['best']:.4f} mean {acc['mean']:.4f} "
          f"± {acc['std']:.4f} over {n_runs} runs")
    return EXIT_OK


def _cmd_compare(cli: CliConfig) -> int:
    from .datapipe import SampleManifest
    from .evalstats import grouped_bar_svg, roc_svg, write_json, write_metrics_csv
    from .trainer import comparative_protocol

    manifests = _require(cli.config, "manifests")
    mri = SampleManifest.load(_require(manifests, "mri"))
    us = SampleManifest.load(_require(manifests, "us"))
    paired = SampleManifest.load(_require(manifests, "paired"))
    result = comparative_protocol(
        mri, us, paired,
        profile=cli.profile or cli.config.get("profile", "micro"),
        epochs=cli.config.get("epochs"),
        base_seed=cli.seed if cli.seed is not None else int(cli.config.get("base_seed", 0)),
        n_runs=int(cli.config.get("n_runs", 5)),
        batch_size=int(cli.config.get("batch_size", 8)),
        out_dir=cli.out_dir)

    out = Path(cli.out_dir)
    write_json(out / "metrics.json", result["metrics"])
    write_json(out / "summaries.json", result["summaries"])
    write_json(out / "comparison.json", result["comparison"])
    write_json(out / "records.json", {
        m: [r.as_dict() for r in rs] for m, rs in result["records"].items()})
    rows = [dict(model=m, run=i, **metrics)
            for m, per_run in result["metrics"].items()
            for i, metrics in enumerate(per_run)]
    write_metrics_csv(out / "runs.csv", rows,
                      ["model", "run", "accuracy", "auc", "precision",
                       "recall", "f1"])
    (out / "roc.svg").write_text(roc_svg(result["roc"], title="shared test set ROC"))
    metric_names = ["accuracy", "auc", "precision", "recall", "f1"]
    series = {m: [result["summaries"][m][k]["mean"] for k in metric_names]
              for m in result["metrics"]}
    (out / "metrics.svg").write_text(grouped_bar_svg(metric_names, series,
                                                     title="mean test metrics"))
    _write_run_record(cli, {"test_size": result["test_size"]})
    for model, summary in result["summaries"].items():
        acc = summary["accuracy"]
        print(f"{model}: accuracy best {acc['best']:.4f} "
              f"mean {acc['mean']:.4f} ± {acc['std']:.4f}")
    return EXIT_OK


def _load_model_from_checkpoint(path, profile_override=None):
    from .models import build_model
    from .trainer import load_checkpoint

    state, sidecar = load_checkpoint(path)
    kind = sidecar.get("model")
    profile = profile_override or sidecar.get("profile", "micro")
    if kind not in ("mri", "us", "fusion"):
        raise ConfigError(f"checkpoint sidecar lacks a valid model kind: {kind!r}")
    model = build_model(kind, profile, seed=int(sidecar.get("seed", 0)))
    model.load_state_arrays({k: v for k, v in state.items()
                             if not k.startswith("adam.")})
    model.eval()
    return model, kind, sidecar


def _cmd_eval(cli: CliConfig) -> int:
    from .datapipe import SampleManifest
    from .evalstats import report_from_scores, roc_svg, write_json
    from .models.profiles import get_profile
    from .trainer import (PreprocessCache, TrainConfig, evaluate,
                          items_from_pairs, items_from_samples)

    model, kind, sidecar = _load_model_from_checkpoint(
        _require(cli.config, "checkpoint"), cli.profile)
    manifest = SampleManifest.load(_require(cli.config, "manifest"))
    split = cli.config.get("split", "test")
    profile = get_profile(cli.profile or sidecar.get("profile", "micro"))
    if kind == "fusion":
        items = items_from_pairs(manifest, split)
    else:
        items = items_from_samples(manifest.modality_samples(kind, split), kind)
    if not items:
        from .trainer import DataError
        raise DataError(f"no {kind} samples in split {split!r}")
    cfg = TrainConfig(model=kind, profile=profile.name).resolved()
    result = evaluate(model, items, PreprocessCache(profile), cfg)
    report = report_from_scores(result["labels"], result["scores"])
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "metrics.json", report.as_dict())
    (out / "roc.svg").write_text(roc_svg({kind: report.roc_points}))
    _write_run_record(cli, {"split": split, "n": len(items)})
    print(f"{kind} on {split}: accuracy {report.accuracy:.4f} auc {report.auc:.4f}")
    return EXIT_OK


def _cmd_explain(cli: CliConfig) -> int:
    from .datapipe import SampleManifest
    from .evalstats import write_json
    from .gradcam import gradcam, render_overlay
    from .models.profiles import get_profile
    from .trainer import PreprocessCache, items_from_pairs, items_from_samples

    model, kind, sidecar = _load_model_from_checkpoint(
        _require(cli.config, "checkpoint"), cli.profile)
    manifest = SampleManifest.load(_require(cli.config, "manifest"))
    split = cli.config.get("split", "test")
    class_index = int(cli.config.get("class_index", 1))
    limit = int(cli.config.get("max_samples", 4))
    profile = get_profile(cli.profile or sidecar.get("profile", "micro"))
    cache = PreprocessCache(profile)

    if kind == "fusion":
        items = items_from_pairs(manifest, split)
    else:
        items = items_from_samples(manifest.modality_samples(kind, split), kind)
    wanted = cli.config.get("patients")
    if wanted:
        items = [it for it in items if it.patient_id in set(wanted)]
    items = items[:limit]

    index = []
    out = Path(cli.out_dir)
    for it in items:
        inputs, source = _explain_inputs(it, cache, kind)
        targets = (model.cam_targets() if kind == "fusion"
                   else {kind: model.cam_target()})
        for branch, conv in targets.items():
            heat = gradcam(model, inputs, class_index, target=conv,
                           sample_id=it.patient_id)
            src = source[branch] if isinstance(source, dict) else source
            files = render_overlay(heat, src, out,
                                   stem=f"{it.patient_id}_{branch}")
            index.append(files)
    write_json(out / "explain_index.json", index)
    _write_run_record(cli, {"n_explained": len(items), "class_index": class_index})
    print(f"wrote Grad-CAM overlays for {len(items)} samples to {out}")
    return EXIT_OK


def _explain_inputs(item, cache, kind):
    if kind == "mri":
        vol = cache.volume(item.mri_uri)
        return (vol[None],), vol
    if kind == "us":
        img = cache.image(item.us_uri)
        return (img,), img
    vol = cache.volume(item.mri_uri)
    img = cache.image(item.us_uri)
    return (vol[None], img), {"mri": vol, "us": img}


def _cmd_stats(cli: CliConfig) -> int:
    from .evalstats import compare_models, write_json

    metrics = cli.config.get("metrics")
    if metrics is None:
        path = _require(cli.config, "metrics_file")
        metrics = json.loads(Path(path).read_text())
    result = compare_models(metrics, alpha=float(cli.config.get("alpha", 0.05)))
    out = Path(cli.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "comparison.json", result)
    _write_run_record(cli, {"models": result["models"]})
    n_sig = sum(1 for m in result["metrics"].values()
                for p in m["pairwise"].values() if p["significant"])
    print(f"{n_sig} significant pairwise differences at alpha {result['alpha']}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "multirun": _cmd_multirun,
    "compare": _cmd_compare,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if "--deterministic" in argv:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = "1"
    try:
        cli = parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .datapipe import ManifestError, NiftiError, PreprocessError, RawFormatError
    from .evalstats import MetricsError, StatsError
    from .trainer import DataError, NumericError

    try:
        return _COMMANDS[cli.command](cli)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, NiftiError, RawFormatError, PreprocessError,
            DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, MetricsError, StatsError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
