"""Command line entry point: ``v2xbeam generate | train | eval | export | report``.

Exit codes: 0 on success, 1 for invalid input (config, files, mismatched
artifacts), 2 for failures while running.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, sub_seed
from .dataset import SPLIT_NAMES, Dataset, generate, write_atomic
from .evaluate import (MetricReport, ScenarioTrace, atrr_policy, atrr_selection, bctpa,
                       fixed_policy, perfect_policy, robustness_sweep)
from .features import group_min_bct
from .predict import checkpoint
from .predict.baselines import KnnLocationBaseline
from .predict.bct import sequence_features
from .predict.nn import TrainingDiverged
from .predict.training import TrainConfig, train_bct, train_vdban, vdban_spec_from, with_signal

log = logging.getLogger("v2xbeam")

REPORT_COLUMNS = ["config_hash", "metric", "predictor", "split", "subset", "B", "sigma_c", "M_f",
                  "tb_over_td", "value", "n"]


class ValidationError(Exception):
    """Bad user input; maps to exit code 1."""


def _csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue().encode()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _load_dataset(path) -> Dataset:
    try:
        return Dataset.load(path)
    except FileNotFoundError:
        raise ValidationError(f"dataset not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def _config_for(args, ds: Dataset | None = None) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    if ds is not None:
        return RunConfig(ds.header["config"])
    return RunConfig()


# -- generate -------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = RunConfig.load(args.config)
    out = Path(args.out)
    if not out.parent.exists():
        raise ValidationError(f"output directory does not exist: {out.parent}")

    def progress(stage, done, total):
        log.info("%s %d/%d", stage, done, total)

    ds = generate(cfg, args.workers, progress if args.verbose else None)
    digest = ds.save(out)
    print(f"wrote {out}: {len(ds.records)} records, {ds.n_pairs} beam pairs, "
          f"config {cfg.hash}, sha256 {digest[:16]}")
    return 0


# -- train --------------------------------------------------------------------

def cmd_train(args) -> int:
    ds = _load_dataset(args.dataset)
    cfg = _config_for(args, ds)
    tr = dict(cfg["train"][args.model])
    if args.epochs is not None:
        tr["epochs"] = args.epochs
    seed = sub_seed(cfg.seed, "train_vdban" if args.model == "vdban" else "train_bct")
    tcfg = TrainConfig(epochs=int(tr["epochs"]), batch_size=int(tr["batch_size"]), lr=float(tr["lr"]),
                       optimizer=tr["optimizer"], seed=seed % (2 ** 32),
                       label_key="beam_label" if args.model == "vdban" else "bct_group",
                       resample=bool(tr["resample"]))
    train_idx, val_idx = ds.split_indices("train"), ds.split_indices("validation")
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValidationError("dataset has an empty train or validation split")
    meta = {"dataset_sha256": ds.digest(), "pairs_hash": ds.pairs_hash(), "seed": tcfg.seed,
            "config_hash": cfg.hash, "train": tcfg.__dict__}

    def progress(row):
        log.info("epoch %d %s", row["epoch"], {k: v for k, v in row.items() if k != "epoch"})

    cb = progress if args.verbose else None
    if args.model == "vdban":
        spec = vdban_spec_from(ds, tr)
        model, trace = train_vdban(ds, train_idx, val_idx, spec, tcfg, progress=cb)
        checkpoint.save_vdban(args.out, model, meta)
        cols = ["config_hash", "epoch", "train_loss", "val_top1_atrr"]
    else:
        pool = int(tr["pool"])
        try:
            model, trace = train_bct(ds, train_idx, val_idx, int(tr["hidden"]), tcfg, pool, cb)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        meta.update({"pool": pool, "uses_sif": ds.has_sif, "seq_len": ds.seq_len})
        checkpoint.save_bct(args.out, model, meta)
        cols = ["config_hash", "epoch", "train_loss", "val_bctpa"]
    trace_path = Path(args.trace) if args.trace else Path(str(args.out) + ".trace.csv")
    write_atomic(trace_path, _csv_bytes(cols, [{"config_hash": cfg.hash, **r} for r in trace]))
    print(f"wrote {args.out} and {trace_path} ({len(trace)} epochs)")
    return 0


# -- eval ---------------------------------------------------------------------

def _load_checkpoint(path, ds: Dataset, kind: str):
    try:
        header, model = checkpoint.load(path)
    except FileNotFoundError:
        raise ValidationError(f"checkpoint not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if header["kind"] != kind:
        raise ValidationError(f"{path} holds a {header['kind']} model, expected {kind}")
    if header["pairs_hash"] != ds.pairs_hash():
        raise ValidationError(f"{path} was trained on a different beam-pair set "
                              f"({header['pairs_hash']} != {ds.pairs_hash()}); refusing to evaluate")
    return header, model


def _report_row(cfg_hash, rep: MetricReport, predictor: str) -> dict:
    p = rep.params
    return {"config_hash": cfg_hash, "metric": rep.metric, "predictor": predictor,
            "split": rep.split, "subset": rep.subset, "B": p.get("B", ""),
            "sigma_c": p.get("sigma_c", ""), "M_f": p.get("M_f", ""),
            "tb_over_td": p.get("tb_over_td", ""), "value": rep.value, "n": rep.n}


def _traces(ds: Dataset, idx: np.ndarray):
    rec = ds.records[idx]
    qs = sorted(set(int(q) for q in rec["q"]))
    out, positions = [], []
    for q in qs:
        sel = idx[rec["q"] == q]
        sel = sel[np.argsort(ds.records["r"][sel])]
        r = ds.records[sel]
        out.append(ScenarioTrace(r["rates"], r["beam_label"], r["optimal_rate"], r["bct_label"],
                                 r["los"].astype(bool)))
        positions.append(sel)
    return qs, out, positions


def cmd_eval(args) -> int:
    ds = _load_dataset(args.dataset)
    cfg = _config_for(args, ds)
    ev = cfg["eval"]
    split = args.split or ev["split"]
    idx = ds.split_indices(split)
    if len(idx) == 0:
        raise ValidationError(f"split {split!r} is empty")
    rec = ds.records[idx]
    los = rec["los"].astype(bool)
    h = cfg.hash
    rows = []

    predictors = {}
    if args.oracle:
        n = ds.n_pairs

        def oracle_rank(vdf, loc, labels=rec["beam_label"]):
            ranked = np.tile(np.arange(n), (len(labels), 1))
            ranked[:, 0] = labels
            ranked[np.arange(len(labels)), labels] = 0
            return ranked
        predictors["oracle"] = oracle_rank
    if args.checkpoint:
        _, model = _load_checkpoint(args.checkpoint, ds, "vdban")
        if model.spec.G != ds.grid.G:
            raise ValidationError("checkpoint grid size does not match the dataset")
        predictors["vdban"] = model.rank
    if args.knn or not predictors:
        tr = ds.records[with_signal(ds.records, ds.split_indices("train"))]
        knn = KnnLocationBaseline(tr["ms_location"], tr["beam_label"], ds.n_pairs, int(ev["knn_k"]))
        predictors["knn"] = knn.rank

    subsets = [s for s, m in (("all", np.ones_like(los)), ("los", los), ("nlos", ~los)) if m.any()]
    for name, rank_fn in predictors.items():
        ranked = rank_fn(rec["vdf"], rec["ms_location"])
        for B in ev["top_b"]:
            for subset in subsets:
                rep = atrr_selection(rec["rates"], rec["optimal_rate"], ranked, int(B), los, subset, split)
                rows.append(_report_row(h, rep, name))
        if name != "oracle":
            sigmas = [float(s) for s in ev["location_sigmas"]]
            seeds = [sub_seed(cfg.seed, "location_noise", k) for k in range(len(sigmas))]
            for rep in robustness_sweep(rec["vdf"], rec["ms_location"], los, rec["rates"],
                                        rec["optimal_rate"], rank_fn,
                                        lambda k, loc: ds.vdf_at(idx[k], loc), sigmas, seeds, 5, split):
                rows.append(_report_row(h, MetricReport("atrr_s_sweep", rep.split, rep.subset,
                                                        rep.value, rep.n, rep.params), name))

    S = ds.seq_len
    _, traces, positions = _traces(ds, idx)
    for tb in ev["tb_over_td"]:
        for m in ev["fixed_bct"]:
            rep = atrr_policy(traces, fixed_policy(int(m)), float(tb), S, split,
                              params={"M_f": int(m)})
            rows.append(_report_row(h, rep, "fixed"))
        rows.append(_report_row(h, atrr_policy(traces, perfect_policy(traces), float(tb), S, split),
                                "perfect_bct"))

    if args.bct_checkpoint:
        header, bmodel = _load_checkpoint(args.bct_checkpoint, ds, "bct")
        x, keep = sequence_features(ds, idx, int(header.get("pool", 4)))
        if x.shape[1] != bmodel.n_in:
            raise ValidationError("BCT checkpoint input size does not match the dataset features")
        groups = bmodel.predict_group(x)
        pred_by_record = dict(zip(keep.tolist(), groups.tolist()))
        rows.append(_report_row(h, bctpa(ds.records["bct_label"][keep], groups, split=split),
                                "bct_model"))

        def learned(qi, i):
            return group_min_bct(pred_by_record[int(positions[qi][i])])
        for tb in ev["tb_over_td"]:
            rows.append(_report_row(h, atrr_policy(traces, learned, float(tb), S, split), "bct_model"))
    # constant-group references for the BCT accuracy table
    r_all = ds.records["r"][idx]
    elig = r_all >= S
    if elig.any():
        for g in (1, 2, 3):
            rep = bctpa(ds.records["bct_label"][idx], np.full(len(idx), g), r_all, S, split)
            rows.append(_report_row(h, rep, f"constant_group_{g}"))

    write_atomic(args.out, _csv_bytes(REPORT_COLUMNS, rows))
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


# -- export -------------------------------------------------------------------

def cmd_export(args) -> int:
    ds = _load_dataset(args.dataset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = ds.records
    split_of = {}
    for name in SPLIT_NAMES:
        for q in ds.header["splits"][name]:
            split_of[int(q)] = name
    n_rx = ds.header["codebook"]["rx"]
    cfg_hash = ds.header["config_hash"]
    cols = ["config_hash", "row", "q", "r", "time", "x", "y", "los", "beam_full", "tx_beam",
            "rx_beam", "beam_label", "bct_label", "bct_group", "optimal_rate", "split"]
    rows = []
    for i, x in enumerate(rec):
        rows.append({"config_hash": cfg_hash, "row": i, "q": int(x["q"]), "r": int(x["r"]),
                     "time": float(x["time"]), "x": float(x["ms_location"][0]),
                     "y": float(x["ms_location"][1]), "los": int(x["los"]),
                     "beam_full": int(x["beam_full"]), "tx_beam": int(x["beam_full"]) // n_rx,
                     "rx_beam": int(x["beam_full"]) % n_rx, "beam_label": int(x["beam_label"]),
                     "bct_label": int(x["bct_label"]), "bct_group": int(x["bct_group"]),
                     "optimal_rate": float(x["optimal_rate"]), "split": split_of[int(x["q"])]})
    write_atomic(out / "index.csv", _csv_bytes(cols, rows))
    blobs = {"vdf.bin": ("vdf", "<f4"), "rates.bin": ("rates", "<f8")}
    if ds.has_sif:
        blobs["sif.bin"] = ("sif", "<f4")
    meta = {"config_hash": cfg_hash, "n_records": len(rec), "pairs": ds.header["pairs"],
            "pair_indices": ds.header["pair_indices"], "files": {}}
    for fname, (field, dt) in blobs.items():
        arr = np.ascontiguousarray(rec[field], dtype=dt)
        write_atomic(out / fname, arr.tobytes())
        meta["files"][fname] = {"dtype": dt, "shape": list(arr.shape), "order": "C"}
    write_atomic(out / "meta.json", (json.dumps(meta, indent=1, sort_keys=True) + "\n").encode())
    print(f"exported {len(rec)} records to {out}")
    return 0


# -- report -------------------------------------------------------------------

def cmd_report(args) -> int:
    """Turn report CSVs into x/y series for plotting."""
    series = defaultdict(list)
    hashes = set()
    for path in args.inputs:
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ValidationError(f"report not found: {path}") from None
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValidationError(f"{path}: not an eval report (columns {reader.fieldnames})")
        for row in reader:
            hashes.add(row["config_hash"])
            m, pred, sub = row["metric"], row["predictor"], row["subset"]
            if m == "atrr_s":
                series[(f"top_b/{pred}/{sub}", row["config_hash"])].append((float(row["B"]), row["value"]))
            elif m == "atrr_s_sweep":
                series[(f"location_noise/{pred}/{sub}", row["config_hash"])].append(
                    (float(row["sigma_c"]), row["value"]))
            elif m == "atrr_p" and pred == "fixed":
                series[(f"fixed_bct/tb={float(row['tb_over_td']):.4f}", row["config_hash"])].append(
                    (float(row["M_f"]), row["value"]))
            elif m == "atrr_p":
                series[(f"policy/{pred}", row["config_hash"])].append(
                    (float(row["tb_over_td"]), row["value"]))
            elif m == "bctpa":
                series[(f"bctpa/{pred}", row["config_hash"])].append((0.0, row["value"]))
    rows = []
    for (name, ch), pts in sorted(series.items()):
        for x, y in sorted(pts, key=lambda p: p[0]):
            rows.append({"config_hash": ch, "series": name, "x": repr(x), "y": y})
    write_atomic(args.out, _csv_bytes(["config_hash", "series", "x", "y"], rows))
    print(f"wrote {args.out} ({len(rows)} points, {len(series)} series)")
    return 0


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="v2xbeam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate scenarios and write a dataset file")
    g.add_argument("--config", required=True, help="YAML run configuration")
    g.add_argument("--out", required=True, help="dataset file to write")
    g.add_argument("--workers", type=int, default=None, help="worker processes (default: config)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a VDBAN or BCT model")
    t.add_argument("--dataset", required=True)
    t.add_argument("--model", choices=("vdban", "bct"), required=True)
    t.add_argument("--out", required=True, help="checkpoint file to write")
    t.add_argument("--config", help="run configuration (default: the dataset's own)")
    t.add_argument("--trace", help="per-epoch CSV (default: <out>.trace.csv)")
    t.add_argument("--epochs", type=int, help="override the configured epoch count")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="compute metrics into a report CSV")
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True, help="report CSV to write")
    e.add_argument("--config", help="run configuration (default: the dataset's own)")
    e.add_argument("--checkpoint", help="VDBAN checkpoint")
    e.add_argument("--bct-checkpoint", help="BCT classifier checkpoint")
    e.add_argument("--knn", action="store_true", help="include the location-only k-NN baseline")
    e.add_argument("--oracle", action="store_true", help="include the oracle ranking")
    e.add_argument("--split", choices=("validation", "test"))
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="flat binary + CSV export for external frameworks")
    x.add_argument("--dataset", required=True)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(func=cmd_export)

    r = sub.add_parser("report", help="convert eval reports to plot series")
    r.add_argument("inputs", nargs="+", help="report CSV files")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
