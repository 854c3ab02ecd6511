"""Experiment runner: train / eval / ablate / synth / unpair subcommands.

Configuration comes from a JSON file of flat (optionally dotted) keys,
overridable on the command line; precedence is flags > file > defaults.
Metric files store fractions; the console renders percentages. Exit codes:
0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import kmeans
from .data import (ViewBundle, load_dataset, manifest_hash, save_dataset,
                   synth_generate, unpair, SynthSpec)
from .metrics import evaluate_partition
from .model import save_models
from .trainer import (TrainConfig, ablation_config, extract_latents,
                      final_cluster, fit)
from .util import ConfigError, DataError, NumericError

OUT_ROOT_ENV = "UMCLUST_RUNS"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _collect_overrides(pairs: list[str]) -> dict:
    """Turn leftover ``--key value`` argument pairs into a config mapping."""
    out = {}
    i = 0
    while i < len(pairs):
        tok = pairs[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            i += 1
            if i >= len(pairs):
                raise ConfigError(f"missing value for --{key}")
            value = pairs[i]
        out[key] = _parse_value(value)
        i += 1
    return out


def resolve_config(config_path, overrides: dict) -> tuple[TrainConfig, dict]:
    mapping = {}
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        mapping.update(loaded)
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    extras = {k: mapping.pop(k) for k in ("dataset", "out") if k in mapping}
    if "dataset" not in extras:
        raise ConfigError("no dataset directory given (config key 'dataset' or --dataset)")
    return TrainConfig.from_mapping(mapping), extras


def _default_run_dir(dataset: str, cfg: TrainConfig) -> Path:
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / f"{Path(dataset).name}-{cfg.mode}-seed{cfg.seed}"


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_latents(run_dir: Path, latents) -> None:
    for v, z in enumerate(latents, start=1):
        with open(run_dir / f"latents_view{v}.csv", "w") as f:
            for row in z:
                f.write(",".join(f"{x:.17g}" for x in row) + "\n")


def compute_metrics(bundle: ViewBundle, assignments: np.ndarray) -> dict:
    truth = bundle.pooled_labels()
    if assignments.shape != truth.shape:
        raise DataError(
            f"assignment length {assignments.shape[0]} does not match dataset N={truth.size}")
    result = {"pooled": evaluate_partition(truth, assignments), "per_view": []}
    start = 0
    for v, view in enumerate(bundle.views, start=1):
        n = view.labels.size
        block = evaluate_partition(view.labels, assignments[start:start + n])
        block["view"] = v
        result["per_view"].append(block)
        start += n
    return result


def _print_metrics(metrics: dict) -> None:
    pooled = metrics["pooled"]
    print("pooled:  " + "  ".join(f"{k.upper()} {100 * pooled[k]:.2f}%"
                                  for k in ("nmi", "acc", "f1", "precision")))
    for block in metrics["per_view"]:
        line = "  ".join(f"{k.upper()} {100 * block[k]:.2f}%"
                         for k in ("nmi", "acc", "f1", "precision"))
        print(f"view {block['view']}:  {line}")


def run_train(cfg: TrainConfig, dataset: str, run_dir: Path) -> dict:
    bundle = load_dataset(dataset, standardize=cfg.standardize)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": cfg.to_mapping(),
        "dataset": str(dataset),
        "dataset_manifest_sha256": manifest_hash(dataset),
        "code_version": __version__,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": {
            "train_log": "train_log.jsonl",
            "checkpoint": "model.ckpt",
            "assignments": "assignments.csv",
            "metrics": "metrics.json",
            "latents": [f"latents_view{v + 1}.csv" for v in range(bundle.V)],
        },
    }
    _write_json(run_dir / "run_manifest.json", manifest)
    models, _ = fit(bundle, cfg, log_path=run_dir / "train_log.jsonl")
    save_models(models, run_dir / "model.ckpt")
    latents = extract_latents(models, bundle)
    _write_latents(run_dir, latents)
    assignments = final_cluster(latents, cfg.k, cfg.seed,
                                restarts=cfg.final_kmeans_restarts)
    with open(run_dir / "assignments.csv", "w") as f:
        f.writelines(f"{int(a)}\n" for a in assignments)
    metrics = compute_metrics(bundle, assignments)
    _write_json(run_dir / "metrics.json", metrics)
    return metrics


def cmd_train(args, overrides) -> int:
    cfg, extras = resolve_config(args.config, overrides)
    dataset = extras["dataset"]
    run_dir = Path(extras.get("out") or _default_run_dir(dataset, cfg))
    metrics = run_train(cfg, dataset, run_dir)
    print(f"run directory: {run_dir}")
    _print_metrics(metrics)
    return 0


def cmd_eval(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown arguments: {sorted(overrides)}")
    bundle = load_dataset(args.dataset, standardize=not args.no_standardize)
    if args.assignments:
        try:
            assignments = np.loadtxt(args.assignments, dtype=np.int64, ndmin=1)
        except ValueError as e:
            raise DataError(f"{args.assignments}: {e}") from e
    elif args.run:
        path = Path(args.run) / "assignments.csv"
        if not path.is_file():
            raise DataError(f"{path}: no assignments file in run directory")
        assignments = np.loadtxt(path, dtype=np.int64, ndmin=1)
    elif args.latents:
        latents = []
        for v in range(1, bundle.V + 1):
            path = Path(args.latents) / f"latents_view{v}.csv"
            if not path.is_file():
                raise DataError(f"missing {path}")
            latents.append(np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2))
        assignments = final_cluster(latents, bundle.k, args.seed)
    else:
        raise ConfigError("eval needs one of --run, --assignments or --latents")
    metrics = compute_metrics(bundle, assignments)
    if not args.no_original:
        metrics["original_per_view"] = []
        for v, view in enumerate(bundle.views, start=1):
            st = kmeans(view.x, bundle.k, seed=(args.seed, 44, v), max_iters=300,
                        restarts=10)
            block = evaluate_partition(view.labels, st.assignments)
            block["view"] = v
            metrics["original_per_view"].append(block)
    out = Path(args.out) if args.out else None
    if out:
        _write_json(out, metrics)
        print(f"wrote {out}")
    _print_metrics(metrics)
    return 0


_ABLATION_CELLS = [  # (orth, compact, align) in the conventional 12-line order
    (False, False, "none"), (True, False, "none"),
    (False, True, "none"), (True, True, "none"),
    (False, False, "KL"), (True, False, "KL"),
    (False, True, "KL"), (True, True, "KL"),
    (False, False, "KLs"), (True, False, "KLs"),
    (False, True, "KLs"), (True, True, "KLs"),
]


def cmd_ablate(args, overrides) -> int:
    cfg, extras = resolve_config(args.config, overrides)
    dataset = extras["dataset"]
    out_dir = Path(extras.get("out") or _default_run_dir(dataset, cfg).with_name(
        f"{Path(dataset).name}-ablation-seed{cfg.seed}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.grid == "losses":
        cells = [("cell%02d" % (i + 1), ablation_config(cfg, o, c, a))
                 for i, (o, c, a) in enumerate(_ABLATION_CELLS)]
    elif args.grid == "weights":
        cells = [(mode, replace(cfg, mode=mode)) for mode in ("RGs", "URGs", "NRGs")]
    else:
        raise ConfigError(f"unknown grid {args.grid!r}")
    if not cells:
        raise ConfigError("empty ablation grid")
    rows = []
    for name, cell_cfg in cells:
        metrics = run_train(cell_cfg, dataset, out_dir / name)
        pooled = metrics["pooled"]
        rows.append((name, cell_cfg.mode, cell_cfg.use_orth, cell_cfg.use_compact,
                     cell_cfg.use_align, pooled["nmi"], pooled["acc"],
                     pooled["f1"], pooled["precision"]))
        print(f"{name}: mode={cell_cfg.mode} orth={cell_cfg.use_orth} "
              f"compact={cell_cfg.use_compact} align={cell_cfg.use_align} "
              f"NMI {100 * pooled['nmi']:.2f}%")
    with open(out_dir / "summary.csv", "w") as f:
        f.write("cell,mode,orth,compact,align,nmi,acc,f1,precision\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")
    print(f"summary: {out_dir / 'summary.csv'}")
    return 0


def cmd_synth(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown arguments: {sorted(overrides)}")
    spec = SynthSpec(
        k=args.k, views=args.views, per_cluster=args.per_cluster,
        view_dims=[int(x) for x in args.dims.split(",")] if args.dims else [],
        noise=[float(x) for x in args.noise.split(",")] if args.noise else [],
        separation=args.separation, gen_dim=args.gen_dim,
        nonlinear=args.nonlinear, seed=args.seed)
    paired = synth_generate(spec)
    bundle = paired if args.paired else unpair(paired, args.unpair_seed
                                               if args.unpair_seed is not None else args.seed)
    save_dataset(bundle, args.out)
    print(f"wrote {bundle.V}-view dataset ({bundle.N} samples, k={bundle.k}) to {args.out}")
    return 0


def cmd_unpair(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown arguments: {sorted(overrides)}")
    bundle = load_dataset(args.input, standardize=False)
    save_dataset(unpair(bundle, args.seed), args.out)
    print(f"wrote unpaired dataset to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="umclust",
        description="Unpaired multi-view clustering with reliable-view guidance")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write run outputs")
    train.add_argument("--config", help="JSON config file")

    ablate = sub.add_parser("ablate", help="run an ablation grid")
    ablate.add_argument("--config", help="JSON config file")
    ablate.add_argument("--grid", default="losses", choices=("losses", "weights"))

    ev = sub.add_parser("eval", help="score assignments or latents against a dataset")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--run", help="run directory containing assignments.csv")
    ev.add_argument("--assignments", help="assignment CSV (one id per line)")
    ev.add_argument("--latents", help="directory with latents_view<v>.csv files")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="write metrics JSON here")
    ev.add_argument("--no-original", action="store_true",
                    help="skip the raw-feature K-means baseline")
    ev.add_argument("--no-standardize", action="store_true")

    synth = sub.add_parser("synth", help="generate a synthetic dataset directory")
    synth.add_argument("--k", type=int, required=True)
    synth.add_argument("--views", type=int, required=True)
    synth.add_argument("--per-cluster", type=int, required=True)
    synth.add_argument("--dims", help="comma list: feature dims per view")
    synth.add_argument("--noise", help="comma list: noise sigma per view")
    synth.add_argument("--separation", type=float, default=6.0)
    synth.add_argument("--gen-dim", type=int)
    synth.add_argument("--nonlinear", action="store_true")
    synth.add_argument("--seed", type=int, required=True,
                       help="generation seed (mandatory for reproducibility)")
    synth.add_argument("--unpair-seed", type=int)
    synth.add_argument("--paired", action="store_true",
                       help="keep views row-aligned instead of unpairing")
    synth.add_argument("--out", required=True)

    up = sub.add_parser("unpair", help="unpair a row-aligned dataset")
    up.add_argument("--input", required=True)
    up.add_argument("--out", required=True)
    up.add_argument("--seed", type=int, required=True)
    return parser


_HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "unpair": cmd_unpair,
}


def main(argv=None) -> int:
    parser = build_parser()
    args, leftover = parser.parse_known_args(argv)
    try:
        overrides = _collect_overrides(leftover)
        return _HANDLERS[args.command](args, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
