"""Command-line runner: train, fgwd, correlation, dispersion and ablate.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional

from . import __version__
from .analysis import CORRELATION_P, DISPERSION_P, SAMPLES, ablate, correlation, dispersion
from .augment import AugKind
from .distance import fgwd
from .graph import Dataset, DatasetError, cycles_vs_stars, load_tu_dataset, read_graph_json, stratified_split
from .model import AugWardModel, load_checkpoint, save_checkpoint
from .training import NumericError, TrainConfig, metrics_csv, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SYNTHETIC = "synthetic"
SYNTHETIC_SIZE = 300

log = logging.getLogger("augward")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# config -------------------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = type(getattr(TrainConfig(), key))
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text.strip("\"'")
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> TrainConfig:
    """``key = value`` lines (``#`` comments allowed); keys are TrainConfig field names."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text, source=source)
    except configparser.Error as exc:
        raise UsageError(f"{source}: {exc}") from None
    values = {}
    for key, raw in cp["config"].items():
        if key not in _FIELDS:
            raise UsageError(f"{source}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return TrainConfig(**values)


def load_config(path: Optional[str]) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _apply_overrides(cfg: TrainConfig, args) -> TrainConfig:
    changes = {k: getattr(args, k) for k in ("seed", "alpha", "p") if getattr(args, k, None) is not None}
    cfg = cfg.replace(**changes)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


# data and manifest ----------------------------------------------------------------

def load_dataset(name: str, data_dir: Optional[str]) -> Dataset:
    if name == SYNTHETIC:
        return cycles_vs_stars(SYNTHETIC_SIZE, seed=0)
    if data_dir is None:
        raise DatasetError(f"dataset {name!r} needs --data-dir")
    return load_tu_dataset(data_dir, name)


def write_manifest(out_dir: Path, command: str, cfg: TrainConfig, ds: Optional[Dataset], outputs: dict,
                   extra: Optional[dict] = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "dataset": None if ds is None else {"name": ds.name, "graphs": len(ds), "fingerprint": ds.fingerprint()},
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _ratios(text: Optional[str], default) -> tuple:
    if text is None:
        return tuple(default)
    try:
        ps = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad ratio list {text!r}") from None
    if not ps:
        raise UsageError("the ratio list is empty")
    for p in ps:
        if not 0.0 <= p <= 0.5:
            raise UsageError(f"ratio {p} outside [0, 0.5]")
    return ps


def _model_for(args, cfg: TrainConfig, ds: Dataset) -> AugWardModel:
    if args.checkpoint is None:
        return AugWardModel.init(ds.feature_dim, ds.num_classes, cfg.hidden, cfg.num_layers, cfg.seed)
    try:
        model = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise DatasetError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    if model.encoder.input_dim != ds.feature_dim:
        raise DatasetError(f"checkpoint expects {model.encoder.input_dim} features, dataset has {ds.feature_dim}")
    return model


def _graph_index(args, cfg: TrainConfig, ds: Dataset) -> int:
    if args.graph is not None:
        if not 0 <= args.graph < len(ds):
            raise UsageError(f"--graph {args.graph} outside 0..{len(ds) - 1}")
        return args.graph
    # default: the first held-out graph of the configured split
    return stratified_split(ds, cfg.test_fraction, cfg.seed).test_indices[0]


# commands -----------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ds = load_dataset(cfg.dataset, args.data_dir)
    out = Path(args.out_dir)
    outputs = {"metrics": "metrics.csv", "checkpoint": "model.ckpt"}
    write_manifest(out, "train", cfg, ds, outputs)
    split = stratified_split(ds, cfg.test_fraction, cfg.seed)
    progress = (lambda m: log.info("epoch %d loss %.6g test_acc %.4f", m.epoch, m.total, m.test_acc))
    model, history = train(ds, split, cfg, progress=progress)
    (out / outputs["metrics"]).write_text(metrics_csv(history), newline="\n")
    save_checkpoint(model, out / outputs["checkpoint"])
    last = history[-1]
    print(f"epochs={len(history)} train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f}")
    return EXIT_OK


def cmd_fgwd(args) -> int:
    if not 0.0 <= args.alpha <= 1.0:
        raise UsageError(f"--alpha {args.alpha} outside [0, 1]")
    ga, gb = read_graph_json(args.graph_a), read_graph_json(args.graph_b)
    if ga.feature_dim != gb.feature_dim:
        raise DatasetError(f"feature widths differ: {ga.feature_dim} vs {gb.feature_dim}")
    res = fgwd(ga, gb, args.alpha)
    print(f"value={res.value:.12g}")
    print(f"wd_part={res.wd_part:.12g}")
    print(f"gwd_part={res.gwd_part:.12g}")
    print(f"iterations={res.iterations}")
    return EXIT_OK


def cmd_correlation(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ps = _ratios(args.ratios, CORRELATION_P)
    ds = load_dataset(cfg.dataset, args.data_dir)
    gi = _graph_index(args, cfg, ds)
    out = Path(args.out_dir)
    write_manifest(out, "correlation", cfg, ds, {"pairs": "correlation.csv", "summary": "summary.txt"},
                   {"graph_index": gi, "ratios": list(ps), "checkpoint": args.checkpoint})
    model = _model_for(args, cfg, ds)
    res = correlation(model, ds, gi, cfg, ps, args.samples)
    _write_csv(out / "correlation.csv", "p,draw,sq_embedding_dist,fgwd,head_forward,head_swapped", res.rows)
    summary = f"graph={gi} pairs={len(res.rows)} pcc={res.pcc:.9g}"
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_OK


def cmd_dispersion(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ps = _ratios(args.ratios, DISPERSION_P)
    ds = load_dataset(cfg.dataset, args.data_dir)
    gi = _graph_index(args, cfg, ds)
    out = Path(args.out_dir)
    write_manifest(out, "dispersion", cfg, ds, {"samples": "dispersion.csv", "summary": "dispersion_summary.csv"},
                   {"graph_index": gi, "ratios": list(ps), "checkpoint": args.checkpoint})
    model = _model_for(args, cfg, ds)
    res = dispersion(model, ds, gi, cfg, ps, tuple(AugKind), args.samples)
    _write_csv(out / "dispersion.csv", "augment,p,draw,sq_embedding_dist", res.rows)
    _write_csv(out / "dispersion_summary.csv", "augment,p,mean,variance", res.summary)
    for kind, p, mean, var in res.summary:
        print(f"{kind} p={p:g} mean={mean:.6g} var={var:.6g}")
    return EXIT_OK


ABLATION_HEADER = ("name,diff_metric,lambda_aware,lambda_cr,total,base,aware,cr,"
                   "train_acc,test_acc,max_residual,consistent")


def cmd_ablate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    ds = load_dataset(cfg.dataset, args.data_dir)
    out = Path(args.out_dir)
    write_manifest(out, "ablate", cfg, ds, {"table": "ablation.csv"})
    split = stratified_split(ds, cfg.test_fraction, cfg.seed)
    rows = ablate(ds, split, cfg, progress=lambda r: log.info("%s test_acc %.4f", r.name, r.final.test_acc))
    table = []
    for r in rows:
        f = r.final
        table.append((r.name, r.config.diff_metric if r.config.lambda_aware else "-",
                      float(r.config.lambda_aware), float(r.config.lambda_cr), f.total, f.base, f.aware, f.cr,
                      f.train_acc, f.test_acc, r.max_residual, int(r.consistent)))
    _write_csv(out / "ablation.csv", ABLATION_HEADER, table)
    print(f"rows={len(table)} consistent={all(r.consistent for r in rows)}")
    return EXIT_OK


# entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augward", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"augward {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, ratios=False):
        p.add_argument("--config", help="key = value file; keys mirror TrainConfig fields")
        p.add_argument("--data-dir", help="directory holding TU-format files")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--p", type=float, help="augmentation ratio used in training")
        if ratios:
            p.add_argument("--checkpoint")
            p.add_argument("--graph", type=int, help="dataset index (default: first held-out graph)")
            p.add_argument("--ratios", help="comma-separated ratio list")
            p.add_argument("--samples", type=int, default=SAMPLES)

    p = sub.add_parser("train", help="train a model and write metrics and a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fgwd", help="distance between two single-graph JSON files")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_fgwd)

    p = sub.add_parser("correlation", help="embedding distance vs FGWD over augmentations of one graph")
    common(p, ratios=True)
    p.set_defaults(func=cmd_correlation)

    p = sub.add_parser("dispersion", help="embedding-distance spread per augmentation kind")
    common(p, ratios=True)
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("ablate", help="run the seven-rung ablation ladder")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        if getattr(args, "samples", SAMPLES) < 2:
            raise UsageError("--samples must be at least 2")
        return args.func(args)
    except UsageError as exc:
        print(f"augward: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"augward: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"augward: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"augward: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
