"""Command-line entry point: ``gamerep <command> [flags]``.

Every command can also read a JSON config file via ``--config``; explicit
flags take precedence over values from the file. Failures print a single
``error: <code>: <message>`` line to stderr and exit with 2 (configuration),
3 (data) or 4 (numeric failure).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset, evaluate, model, training
from .dataset import SplitSpec, SyntheticConfig
from .errors import ConfigError, DataError, GamerepError
from .model import ModelConfig
from .training import TrainConfig

log = logging.getLogger("gamerep")

REPRODUCE_CORPUS = dict(n_genres=6, games_per_genre=6, images_per_game=200)
METHODS = ("supervised", "contrastive")
ROWS = ("untrained", "fully supervised", "supervised contrastive")
METRICS = ("train_acc", "val_acc", "silhouette")


def _read_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _merge(base: dict, **flags) -> dict:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _build(cls, values: dict, what: str):
    unknown = set(values) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {what} option(s): {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"invalid {what} options: {e}") from e


def _synthetic_config(values: dict) -> SyntheticConfig:
    values = dict(values)
    for key in ("image_size", "noise_range"):
        if key in values:
            values[key] = tuple(values[key])
    cfg = _build(SyntheticConfig, values, "generator")
    cfg.validate()
    return cfg


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {p}: {e}") from e
    return p


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def _model_config(manifest, values: dict) -> ModelConfig:
    values = dict(values)
    values.setdefault("input_size", tuple(manifest.image_size))
    values["n_classes"] = manifest.n_genres
    return _build(ModelConfig, values, "model")


def format_count_table(manifest) -> str:
    styles = [s.name for s in manifest.styles]
    width = max(12, *(len(g.name) for g in manifest.genres))
    head = f"{'genre':<{width}}" + "".join(f"{s:>11}" for s in styles) + f"{'total':>8}"
    lines = [head]
    table = manifest.count_table()
    col_tot = [0] * len(styles)
    for g in manifest.genres:
        row = [table[g.id][s.id] for s in manifest.styles]
        col_tot = [a + b for a, b in zip(col_tot, row)]
        lines.append(f"{g.name:<{width}}" + "".join(f"{c:>11}" for c in row) + f"{sum(row):>8}")
    lines.append(f"{'total':<{width}}" + "".join(f"{c:>11}" for c in col_tot) + f"{sum(col_tot):>8}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    values = _merge(_read_config(args.config), seed=args.seed)
    cfg = _synthetic_config(values)
    out = _out_dir(args.out)
    manifest, samples = dataset.generate_synthetic(cfg)
    counters: dict[str, int] = {}
    paths: dict[str, list[str]] = {g.id: [] for g in manifest.games}
    for s in samples:
        k = counters.get(s.game, 0)
        counters[s.game] = k + 1
        rel = f"images/{s.game}/{k:04d}.png"
        (out / "images" / s.game).mkdir(parents=True, exist_ok=True)
        dataset.write_png(out / rel, s.pixels)
        paths[s.game].append(rel)
    games = [dataset.GameEntry(g.id, g.genre_id, g.style_id, tuple(paths[g.id])) for g in manifest.games]
    on_disk = dataset.DatasetManifest(manifest.genres, manifest.styles, games, manifest.image_size,
                                      cfg.to_dict())
    on_disk.save(out / "manifest.json")
    print(format_count_table(on_disk))
    print(f"wrote {sum(counters.values())} images of {len(games)} games to {out}")
    return 0


def cmd_split(args) -> int:
    conf = _read_config(args.config)
    ratio = args.ratio if args.ratio is not None else conf.get("ratio", 0.75)
    seed = args.seed if args.seed is not None else conf.get("seed", 0)
    manifest = dataset.load_manifest(args.manifest)
    spec = dataset.stratified_game_split(manifest, float(ratio), int(seed))
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        _out_dir(out.parent)
    _write(out, json.dumps(spec.to_json(), indent=2))
    train, val = set(spec.train_games), set(spec.val_games)
    for genre, games in sorted(manifest.games_by_genre().items()):
        ids = {g.id for g in games}
        print(f"{manifest.genres[genre].name}: {len(ids & train)} train / {len(ids & val)} val")
    return 0


def _train_config(conf: dict, args) -> TrainConfig:
    values = {k: v for k, v in conf.items() if k != "model"}
    values = _merge(values, epochs=args.epochs, batch=args.batch, lr=args.lr,
                    margin=args.margin, seed=args.seed)
    if getattr(args, "subsample_steps", False):
        values["subsample_steps"] = True
    return _build(TrainConfig, values, "training")


def run_method(method: str, train, val, mcfg: ModelConfig, tcfg: TrainConfig, out: Path):
    """Train one method; returns final parameters and the full history."""
    history_path = out / "history.jsonl"
    if history_path.exists():
        history_path.unlink()
    if method == "supervised":
        params, hist = training.train_fully_supervised(train, val, mcfg, tcfg, out_dir=out)
    elif method == "contrastive":
        params, hist = training.train_contrastive(train, val, mcfg, tcfg, out_dir=out)
    else:
        raise ConfigError(f"unknown method {method!r}")
    model.save_checkpoint(params, out / "model.ckpt", extra={"method": method, "seed": tcfg.seed})
    return params, hist


def cmd_train(args) -> int:
    conf = _read_config(args.config)
    method = args.method or conf.get("method")
    if method not in METHODS:
        raise ConfigError(f"--method must be one of {METHODS}")
    conf.pop("method", None)
    tcfg = _train_config(conf, args)
    manifest = dataset.load_manifest(args.manifest)
    spec = SplitSpec.load(args.split)
    mcfg = _model_config(manifest, conf.get("model", {}))
    out = _out_dir(args.out)
    train = dataset.load_corpus(manifest, spec.train_games)
    val = dataset.load_corpus(manifest, spec.val_games)
    _write(out / "train_config.json", json.dumps(tcfg.to_json(), indent=2, sort_keys=True))
    _write(out / "model_config.json", json.dumps(mcfg.to_json(), indent=2, sort_keys=True))
    _, hist = run_method(method, train, val, mcfg, tcfg, out)
    last = hist.records[-1]
    print(f"{method}: {len(hist.records)} epochs, final loss {last.loss:.4f}, "
          f"val_acc {last.val_acc:.4f}; checkpoint {out / 'model.ckpt'}")
    return 0


def compare_reports(a: dict, b: dict) -> str:
    lines = []
    for key in METRICS:
        if key in a and key in b:
            lines.append(f"{key}: {a[key]:.4f} -> {b[key]:.4f} ({b[key] - a[key]:+.4f})")
    return "\n".join(lines)


def export_eval(result: evaluate.Evaluation, out: Path, manifest, want_csv: bool,
                want_tsne: bool, tsne_cfg: evaluate.TsneConfig | None = None, title=None) -> None:
    _write(out / "report.json", result.report.dumps())
    if want_csv:
        evaluate.write_points_csv(out / "representations_val.csv", result.val, result.val_reps)
        evaluate.write_points_csv(out / "representations_train.csv", result.train, result.train_reps)
    if want_tsne:
        cfg = tsne_cfg or evaluate.TsneConfig()
        n = len(result.val)
        if not cfg.perplexity < n / 3:
            raise ConfigError(f"perplexity {cfg.perplexity} infeasible for {n} validation points")
        coords = evaluate.tsne(result.val_reps, cfg)
        evaluate.write_points_csv(out / "tsne_val.csv", result.val, coords, prefix="t")
        names = [g.name for g in manifest.genres]
        evaluate.scatter_png(out / "tsne_val.png", coords, result.val, names, title)


def cmd_eval(args) -> int:
    if args.compare:
        a, b = (json.loads(Path(p).read_text()) for p in args.compare)
        print(compare_reports(a, b))
        return 0
    for flag in ("checkpoint", "manifest", "split", "out"):
        if getattr(args, flag) is None:
            raise ConfigError(f"--{flag} is required unless --compare is given")
    conf = _read_config(args.config)
    params = model.load_checkpoint(args.checkpoint, dtype=np.float32)
    manifest = dataset.load_manifest(args.manifest)
    spec = SplitSpec.load(args.split)
    if params.config.n_classes != manifest.n_genres:
        raise DataError("checkpoint class count does not match the manifest's genres")
    seeds = [int(model.read_checkpoint_extra(args.checkpoint).get("seed", spec.seed))]
    result = evaluate.evaluate_model(params, spec, manifest, seeds, on_embeddings=args.embeddings)
    out = _out_dir(args.out)
    tsne_cfg = _build(evaluate.TsneConfig, conf.get("tsne", {}), "t-SNE")
    export_eval(result, out, manifest, args.csv, args.tsne, tsne_cfg)
    r = result.report
    print(f"train_acc {r.train_acc:.4f}  val_acc {r.val_acc:.4f}  silhouette {r.silhouette:.4f}")
    return 0


def format_table(table: dict) -> str:
    head = f"{'method':<24}" + "".join(f"{m:>22}" for m in METRICS)
    lines = [head]
    for row in ROWS:
        cells = []
        for m in METRICS:
            s = table[row][m]
            cells.append(f"{s['mean']:>10.4f} ± {s['std']:<9.4f}")
        lines.append(f"{row:<24}" + "".join(f"{c:>22}" for c in cells))
    lines.append("mean ± sample std over seeds; 95% t-interval half-widths in table.json")
    return "\n".join(lines)


def reproduce(seeds, out: Path, conf: dict | None = None, tsne: bool = False) -> dict:
    """Generate, split, train both methods and evaluate, once per seed."""
    conf = conf or {}
    ratio = float(conf.get("ratio", 0.75))
    results = {row: {m: [] for m in METRICS} for row in ROWS}
    timings = {}
    for seed in seeds:
        run_dir = _out_dir(out / f"seed-{seed}")
        syn = _synthetic_config(_merge(REPRODUCE_CORPUS, **conf.get("synthetic", {}), seed=seed))
        manifest = dataset.synthetic_manifest(syn)
        manifest.save(run_dir / "manifest.json")
        spec = dataset.stratified_game_split(manifest, ratio, seed)
        spec.save(run_dir / "split.json")
        train = dataset.load_corpus(manifest, spec.train_games)
        val = dataset.load_corpus(manifest, spec.val_games)
        mcfg = _model_config(manifest, conf.get("model", {}))
        tvals = _merge(conf.get("train", {}), seed=seed, record_time=False)
        tcfg = _build(TrainConfig, tvals, "training")

        untrained = model.init_params(mcfg, seed, dtype=np.float32)
        runs = {"untrained": untrained}
        for method, row in zip(METHODS, ROWS[1:]):
            t0 = time.perf_counter()
            params, _ = run_method(method, train, val, mcfg, tcfg, _out_dir(run_dir / method))
            timings[f"{seed}/{method}"] = round(time.perf_counter() - t0, 1)
            runs[row] = params
        for row, params in runs.items():
            sub = _out_dir(run_dir / row.replace(" ", "-"))
            result = evaluate.evaluate_corpora(params, train, val, [seed])
            export_eval(result, sub, manifest, want_csv=False, want_tsne=tsne,
                        title=f"{row} (seed {seed})")
            for m in METRICS:
                results[row][m].append(getattr(result.report, m))
            log.info("seed %s %s: %s", seed, row,
                     {m: round(getattr(result.report, m), 4) for m in METRICS})
    table = {row: {m: evaluate.summarize(v) for m, v in results[row].items()} for row in ROWS}
    doc = {"seeds": [int(s) for s in seeds], "rows": table,
           "per_seed": {row: results[row] for row in ROWS}}
    _write(out / "table.json", json.dumps(doc, indent=2, sort_keys=True))
    _write(out / "timings.json", json.dumps(timings, indent=2, sort_keys=True))
    return doc


def cmd_reproduce(args) -> int:
    conf = _read_config(args.config)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--seeds must be a comma-separated list of integers: {args.seeds}") from e
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("--seeds needs at least one non-negative integer")
    out = _out_dir(args.out)
    doc = reproduce(seeds, out, conf, tsne=args.tsne)
    text = format_table(doc["rows"])
    _write(out / "table.txt", text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gamerep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic corpus and its manifest")
    g.add_argument("--config", help="JSON file of generator options")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="game-disjoint train/validation split")
    s.add_argument("--config")
    s.add_argument("--manifest", required=True)
    s.add_argument("--ratio", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train with one method")
    t.add_argument("--config")
    t.add_argument("--manifest", required=True)
    t.add_argument("--split", required=True)
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--margin", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--subsample-steps", action="store_true",
                   help="use |train|/(10*batch) steps per epoch instead of a full pass")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", help="JSON file; a 'tsne' object overrides t-SNE options")
    e.add_argument("--checkpoint")
    e.add_argument("--manifest")
    e.add_argument("--split")
    e.add_argument("--tsne", action="store_true", help="write t-SNE CSV and scatter PNG")
    e.add_argument("--csv", action="store_true", help="export representations as CSV")
    e.add_argument("--embeddings", action="store_true",
                   help="compute silhouette on projected embeddings instead of representations")
    e.add_argument("--compare", nargs=2, metavar=("A", "B"), help="print metric deltas B - A")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("reproduce", help="untrained vs supervised vs contrastive comparison")
    r.add_argument("--config")
    r.add_argument("--seeds", default="1,2,3")
    r.add_argument("--tsne", action="store_true")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GamerepError as e:
        print(f"error: {e.code}: {e}", file=sys.stderr)
        return e.exit_code
    except FloatingPointError as e:
        print(f"error: numeric_failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
