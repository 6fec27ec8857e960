"""Command-line entry point: ``snelfs {gen,select,success,cv}``.

Exit codes: 0 success, 2 usage error, 3 data or schema error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import GENERATORS, DataError, load_csv, save_csv
from .evaluation import (CvSpec, StratificationError, cv_f1, fisher_ranker, identity_ranker,
                         index_of_success, random_ranker)
from .fslayer import SaliencyReport
from .presets import PRESET_MEASURE, build_config, get_preset
from .train import TrainConfig, TrainReport, select_features, snel_ranker, train

logger = logging.getLogger("snelfs")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"1,4,7"`` or ``"1..5"`` (inclusive)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


def parse_params(items: list[str]) -> dict:
    """``key=value`` pairs; values are parsed as JSON when possible."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.replace("-", "_")] = json.loads(v)
        except json.JSONDecodeError:
            out[k.replace("-", "_")] = v
    return out


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("SNELFS_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# data sources


def generate(name: str, params: dict):
    if name not in GENERATORS:
        raise UsageError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    try:
        return GENERATORS[name](**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for {name}: {exc}") from None


def load_source(source: dict):
    """Dataset plus ground-truth indices (``None`` for CSV input)."""
    if "csv" in source:
        ds = load_csv(source["csv"], source.get("target_col", "target"), source.get("task"))
        return ds, None
    if "generator" in source:
        syn = generate(source["generator"], dict(source.get("params", {})))
        return syn.dataset, syn.true_features
    raise DataError("data source needs a 'csv' or 'generator' entry")


def _source_from_args(args, config: dict) -> dict:
    if getattr(args, "data", None):
        return {"csv": args.data, "target_col": args.target_col, **({"task": args.task} if args.task else {})}
    if getattr(args, "gen", None):
        params = parse_params(args.gen_param)
        return {"generator": args.gen, "params": params}
    if "data" in config:
        return config["data"]
    raise UsageError("give --data, --gen or a config with a 'data' entry")


def _seeds(args, raw: dict, default: int) -> list[int]:
    if args.seeds:
        return parse_seeds(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return list(raw.get("seeds") or [default])


def _config_from_args(args) -> tuple[dict, TrainConfig]:
    raw: dict = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if "tool_version" in raw and "config" in raw:
        # a run manifest: reuse its exact configuration, data source and seeds
        cfg = TrainConfig.from_json(raw["config"])
        if args.lr is not None:
            cfg = replace(cfg, lr=args.lr)
        return {"data": raw["data"], "seeds": raw.get("seeds")}, cfg
    if args.preset:
        raw["preset"] = args.preset
    try:
        cfg = build_config(raw)
    except KeyError as exc:
        raise DataError(str(exc)) from None
    if args.lr is not None:
        cfg = replace(cfg, lr=args.lr)
    return raw, cfg


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    params = parse_params(args.param)
    params.update({k: v for k, v in (("n_samples", args.n), ("n_features", args.m),
                                     ("seed", args.seed)) if v is not None})
    syn = generate(args.generator, params)
    out = Path(args.out)
    save_csv(syn.dataset, out)
    sidecar = out.with_suffix(".truth.json")
    dump_json({"true_features": syn.true_features.tolist(), "n_features": syn.dataset.m,
               "task": str(syn.dataset.task), "params": syn.params,
               "tool_version": __version__}, sidecar)
    print(f"wrote {out} ({syn.dataset.n}x{syn.dataset.m + 1}) and {sidecar}")
    return EXIT_OK


def _run_select(ds, cfg: TrainConfig, out: Path, history_csv: bool) -> dict:
    report = train(ds, cfg)
    doc = report.to_json(include_history=True, include_weights=True)
    doc["warnings"] = []
    if report.no_admissible_model:
        doc["warnings"].append("no checkpoint met the penalty limit; saliency taken from the best-metric checkpoint")
    if report.saliency.excluded_neurons:
        doc["warnings"].append(f"degenerate FS neurons excluded from saliency: {list(report.saliency.excluded_neurons)}")
    doc["config"] = cfg.to_json()
    dump_json(doc, out)
    sal_path = out.with_name(out.stem + ".saliency.json")
    sal = report.saliency.to_json()
    sal["no_admissible_model"] = report.no_admissible_model
    dump_json(sal, sal_path)
    paths = {"train_report": str(out), "saliency": str(sal_path)}
    if history_csv:
        hist_path = out.with_name(out.stem + ".history.csv")
        _write_history(report, hist_path)
        paths["history_csv"] = str(hist_path)
    return paths


def _write_history(report: TrainReport, path: Path) -> None:
    keys = list(report.history)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", *keys])
        for e in range(report.epochs_run):
            w.writerow([e, *(repr(float(report.history[k][e])) for k in keys)])


def cmd_select(args) -> int:
    raw, cfg = _config_from_args(args)
    source = _source_from_args(args, raw)
    ds, truth = load_source(source)
    seeds = _seeds(args, raw, cfg.seed)
    out = Path(args.out)
    started = _now()

    def one(seed: int) -> dict:
        target = out if len(seeds) == 1 else out.with_name(f"{out.stem}.seed{seed}{out.suffix}")
        return _run_select(ds, replace(cfg, seed=seed), target, args.history_csv)

    with ThreadPoolExecutor(max_workers=n_workers()) as pool:
        outputs = list(pool.map(one, seeds))
    manifest = {
        "tool_version": __version__,
        "command": "select",
        "data": source,
        "config": cfg.to_json(),
        "seeds": seeds,
        "outputs": outputs,
        "started": started,
        "finished": _now(),
    }
    if truth is not None:
        manifest["true_features"] = truth.tolist()
    dump_json(manifest, out.with_name(out.stem + ".manifest.json"))
    for seed, paths in zip(seeds, outputs):
        flag = json.loads(Path(paths["saliency"]).read_text())["no_admissible_model"]
        note = "  WARNING: no admissible model" if flag else ""
        print(f"seed {seed}: {paths['train_report']}{note}")
    return EXIT_OK


def _load_saliency(path: Path) -> SaliencyReport:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "saliency" in doc:
        doc = doc["saliency"]
    try:
        return SaliencyReport.from_json(doc)
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a saliency or train report ({exc})") from None


def cmd_success(args) -> int:
    sal = _load_saliency(Path(args.report))
    truth = json.loads(Path(args.truth).read_text(encoding="utf-8"))
    m = sal.sum_weight.size
    if "true_features" not in truth:
        raise DataError(f"{args.truth}: missing 'true_features'")
    if truth.get("n_features", m) != m:
        raise DataError(f"report covers {m} features, truth file {truth['n_features']}")
    selected = select_features(sal, top_k=args.top_k, measure=args.measure)
    suc = index_of_success(selected, truth["true_features"], m)
    result = {"success": suc, "top_k": args.top_k, "measure": args.measure, "selected": selected,
              "true_features": truth["true_features"]}
    print(f"index of success (top-{args.top_k}, {args.measure}): {suc:.4f}")
    if args.out:
        dump_json(result, Path(args.out))
    else:
        print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_cv(args) -> int:
    raw, cfg = _config_from_args(args)
    source = _source_from_args(args, raw)
    ds, _ = load_source(source)
    if not ds.task.is_classification:
        raise DataError("cv needs a classification dataset")
    k = args.k_folds or (10 if ds.task.kind == "binary" else 5)
    classifiers = args.classifier or ["knn", "gnb"]
    seeds = _seeds(args, raw, 0)
    measure = args.measure or raw.get("measure") or PRESET_MEASURE.get(raw.get("preset", ""), "sum_weight")

    def one(seed: int) -> dict:
        if args.method == "snel":
            ranker = snel_ranker(replace(cfg, seed=seed), measure)
        elif args.method == "fscore":
            ranker = fisher_ranker
        elif args.method == "random":
            ranker = random_ranker(seed)
        else:
            ranker = identity_ranker
        n_sel = ds.m if args.method == "none" else args.n_select
        res = cv_f1(ds, ranker, n_sel, classifiers, CvSpec(k, seed))
        return {name: r.to_json() for name, r in res.items()}

    with ThreadPoolExecutor(max_workers=n_workers()) as pool:
        per_seed = list(pool.map(one, seeds))
    table = {
        clf: {
            "per_seed": {str(s): r[clf] for s, r in zip(seeds, per_seed)},
            "mean": float(np.mean([r[clf]["mean"] for r in per_seed])),
        }
        for clf in classifiers
    }
    doc = {"method": args.method, "n_select": args.n_select, "k_folds": k, "seeds": seeds,
           "data": source, "results": table, "tool_version": __version__}
    if args.method == "snel":
        doc["config"] = cfg.to_json()
        doc["measure"] = measure
    print(f"{'classifier':<10} {'mean F1':>8} {'std':>8}")
    for clf in classifiers:
        fold_means = [r[clf]["mean"] for r in per_seed]
        stds = [r[clf]["std"] for r in per_seed]
        print(f"{clf:<10} {np.mean(fold_means):>8.4f} {np.mean(stds):>8.4f}")
    if args.out:
        dump_json(doc, Path(args.out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snelfs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    g.add_argument("generator", help="|".join(sorted(GENERATORS)))
    g.add_argument("--n", type=int, help="number of samples")
    g.add_argument("--m", type=int, help="number of features")
    g.add_argument("--seed", type=int)
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="extra generator parameter, e.g. n_inf=5")
    g.add_argument("--out", required=True, help="output CSV; ground truth goes to <stem>.truth.json")
    g.set_defaults(func=cmd_gen)

    def add_data_args(sp):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--data", help="input CSV")
        src.add_argument("--gen", help="generator name instead of a CSV")
        sp.add_argument("--gen-param", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--target-col", default="target")
        sp.add_argument("--task", help="force task kind: binary | multiclass(k) | regression")
        sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--preset", help="named training preset")
        sp.add_argument("--lr", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--seeds", help="several seeds: 1..5 or 1,2,3")

    s = sub.add_parser("select", help="train and write saliency / train reports")
    add_data_args(s)
    s.add_argument("--out", required=True, help="train report JSON path")
    s.add_argument("--history-csv", action="store_true", help="also write per-epoch history CSV")
    s.set_defaults(func=cmd_select)

    u = sub.add_parser("success", help="index of success of a report against ground truth")
    u.add_argument("--report", required=True)
    u.add_argument("--truth", required=True)
    u.add_argument("--top-k", type=int, required=True)
    u.add_argument("--measure", choices=("sum_weight", "max_weight"), default="sum_weight")
    u.add_argument("--out")
    u.set_defaults(func=cmd_success)

    c = sub.add_parser("cv", help="cross-validated weighted F1 with FS inside the loop")
    add_data_args(c)
    c.add_argument("--method", choices=("snel", "fscore", "random", "none"), default="snel")
    c.add_argument("--classifier", action="append", choices=("knn", "gnb"))
    c.add_argument("--k-folds", type=int)
    c.add_argument("--n-select", type=int, default=15)
    c.add_argument("--measure", choices=("sum_weight", "max_weight"))
    c.add_argument("--out")
    c.set_defaults(func=cmd_cv)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StratificationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
