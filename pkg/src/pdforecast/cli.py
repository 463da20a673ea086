"""Batch command-line surface for the full pipeline.

Subcommands: generate, profile, analyze, train, evaluate, benchmark,
gradcheck. Every run echoes its resolved configuration to the output
directory as run_config.json; passing that file back via --config reproduces
the run. Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset, features, plots
from .dataset import UPDRS_COLS, SynthConfig
from .errors import (ConfigError, DataError, EmptyDataset, GradCheckFailed,
                     InvalidConfig, NumericalError, ToolkitError)
from .features import LagConfig, split_patients
from .gradcheck import run_suite
from .matrix import FeatureMatrix
from .models import (KanForecaster, KanForecasterConfig, LstmForecaster,
                     LstmForecasterConfig, summarize)
from .nncore import load_checkpoint, save_checkpoint
from .preprocess import FittedPreprocessor, fit_preprocessor
from .traineval import (TargetScaler, TrainConfig, evaluate, fit_target_scaler,
                        train)

DATA_FILES = ("peptides.csv", "proteins.csv", "clinical.csv", "supplemental.csv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidConfig(message)


# ---------------------------------------------------------------------------
# Config resolution: defaults < --config file < explicit CLI flags

GENERATE_DEFAULTS = {
    "data_dir": "data", "seed": 0, "patients": 248,
    "visit_months": "0,6,12,24", "peptides": 100, "pct_skewed": 20.58,
    "pct_missing": 8.9, "corr_target": 0.66, "supplemental": 0,
}
ANALYZE_DEFAULTS = {"data_dir": "data", "out_dir": "out", "top_peptides": 5}
TRAIN_DEFAULTS = {
    "data_dir": "data", "out_dir": "out", "model": "kan", "seed": 0,
    "lr": None, "weight_decay": None, "max_epochs": 500, "patience": 50,
    "batch_size": 32, "horizon": 6, "lag_depth": 2, "presence_peptides": 15,
    "val_fraction": 0.2, "dropout": 0.2,
}
GRADCHECK_DEFAULTS = {"eps": 1e-5, "tol": 1e-4, "n_seeds": 20, "seed": 0}

MODEL_LR_DEFAULTS = {"lstm": 1e-3, "kan": 5e-4}
DEFAULT_WEIGHT_DECAY = 1e-5


def _resolve(args, defaults: dict) -> dict:
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _echo_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_months(raw) -> tuple[int, ...]:
    if isinstance(raw, str):
        parts = [p for p in raw.split(",") if p.strip()]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise InvalidConfig(f"bad visit months {raw!r}") from None
    return tuple(int(m) for m in raw)


# ---------------------------------------------------------------------------
# Shared pipeline pieces


def _load_cohort(data_dir) -> dataset.Cohort:
    data_dir = Path(data_dir)
    paths = [data_dir / name for name in DATA_FILES]
    for p in paths:
        if not p.exists():
            raise DataError(f"missing data file {p}")
    return dataset.load_cohort(*paths)


def _prepare(cohort, lag_cfg: LagConfig, val_fraction: float, seed: int):
    """Patient split, preprocessor fit on train rows, supervised assembly."""
    matrix = dataset.to_feature_matrix(cohort)
    train_p, val_p = split_patients([k[0] for k in matrix.row_keys],
                                    val_fraction, seed)
    in_train = np.array([pid in train_p for pid, _ in matrix.row_keys])
    train_matrix = FeatureMatrix(
        matrix.values[in_train], matrix.mask[in_train], matrix.col_names,
        [k for k, t in zip(matrix.row_keys, in_train) if t])
    pre = fit_preprocessor(train_matrix)

    sset = features.build_supervised(cohort, pre, lag_cfg)
    pids = np.array([p for p, _, _ in sset.row_provenance])
    tr_idx = np.isin(pids, sorted(train_p))
    tr, va = sset.subset(tr_idx), sset.subset(~tr_idx)
    if tr.n_rows == 0 or va.n_rows == 0:
        raise EmptyDataset("patient split left an empty train or validation set")
    return pre, tr, va, fit_target_scaler(tr)


def _build_model(kind: str, flat_width: int, lag_depth: int, seed: int,
                 dropout: float):
    if kind == "lstm":
        cfg = LstmForecasterConfig(input_width=4 + flat_width - 4 * lag_depth,
                                   dropout=dropout)
        return LstmForecaster(cfg, seed=seed, lag_depth=lag_depth), cfg
    if kind == "kan":
        cfg = KanForecasterConfig(widths=(flat_width, 45, 91, 183),
                                  dropout=dropout)
        return KanForecaster(cfg, seed=seed), cfg
    raise InvalidConfig(f"unknown model {kind!r}")


def _train_config(kind: str, cfg: dict) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"] if cfg["lr"] is not None else MODEL_LR_DEFAULTS[kind],
        weight_decay=(cfg["weight_decay"] if cfg["weight_decay"] is not None
                      else DEFAULT_WEIGHT_DECAY),
        max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        batch_size=cfg["batch_size"], seed=cfg["seed"],
        dropout=cfg["dropout"])


def _write_model_artifacts(out_dir: Path, kind: str, model, history, report):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model.params, out_dir / "checkpoint.bin")
    (out_dir / "history.csv").write_text(history.to_csv(), encoding="utf-8")
    (out_dir / "eval_report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out_dir / "eval_report.txt").write_text(report.render_text() + "\n",
                                             encoding="utf-8")
    (out_dir / "predictions.csv").write_text(report.predictions_csv(),
                                             encoding="utf-8")
    summary = summarize(model)
    (out_dir / "model_summary.txt").write_text(summary.render_text() + "\n",
                                               encoding="utf-8")
    (out_dir / "model_summary.csv").write_text(summary.to_csv(),
                                               encoding="utf-8")
    plots.save_loss_curves(history, out_dir / "loss_curve.png",
                           f"{kind} training")
    plots.save_pred_scatter(report, out_dir / "pred_scatter.png",
                            f"{kind} predicted vs actual")


def _write_state(out_dir: Path, kind: str, model_cfg, lag_cfg: LagConfig,
                 cfg: dict, pre: FittedPreprocessor, scaler: TargetScaler):
    state = {
        "model": kind,
        "model_config": dataclasses.asdict(model_cfg),
        "lag": dataclasses.asdict(lag_cfg),
        "val_fraction": cfg["val_fraction"],
        "seed": cfg["seed"],
        "preprocessor": json.loads(pre.to_json()),
        "target_scaler": scaler.to_dict(),
    }
    with open(out_dir / "state.json", "w", encoding="utf-8") as fh:
        json.dump(state, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    cfg = _resolve(args, GENERATE_DEFAULTS)
    synth = SynthConfig(
        n_patients=cfg["patients"],
        visit_months=_parse_months(cfg["visit_months"]),
        n_peptides=cfg["peptides"],
        target_pct_skewed=cfg["pct_skewed"],
        target_pct_missing=cfg["pct_missing"],
        target_corr_updrs12=cfg["corr_target"],
        n_supplemental_patients=cfg["supplemental"],
        seed=cfg["seed"])
    cohort = dataset.generate_synthetic(synth)
    data_dir = Path(cfg["data_dir"])
    dataset.write_cohort(cohort, data_dir)
    _echo_config(cfg, data_dir)

    prof = dataset.profile(cohort)
    _print_profile(prof)
    _write_profile(prof, data_dir / "profile.json")
    print(f"wrote {', '.join(DATA_FILES)} to {data_dir}")
    return 0


def _print_profile(prof) -> None:
    print(f"patients:          {prof.n_patients}")
    print(f"visit months:      {sorted(prof.visit_months)}")
    print(f"skewed columns:    {prof.pct_skewed_columns:.2f}%")
    print(f"missing cells:     {prof.pct_missing_cells:.2f}%")
    worst = sorted(prof.per_column_missing.items(), key=lambda kv: -kv[1])[:5]
    print("most missing:      "
          + ", ".join(f"{name} {pct:.1f}%" for name, pct in worst))


def _write_profile(prof, path: Path) -> None:
    doc = {
        "n_patients": prof.n_patients,
        "visit_months": sorted(prof.visit_months),
        "pct_skewed_columns": prof.pct_skewed_columns,
        "pct_missing_cells": prof.pct_missing_cells,
        "per_column_missing": prof.per_column_missing,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_profile(args) -> int:
    cohort = _load_cohort(args.data_dir or "data")
    _print_profile(dataset.profile(cohort))
    return 0


def cmd_analyze(args) -> int:
    cfg = _resolve(args, ANALYZE_DEFAULTS)
    cohort = _load_cohort(cfg["data_dir"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)

    matrix = dataset.to_feature_matrix(cohort)
    cols = list(UPDRS_COLS) + ["visit_month"]
    corr = features.correlation_matrix(matrix, cols)
    lines = ["," + ",".join(cols)]
    for name, row in zip(cols, corr):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    (out_dir / "correlation.csv").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")
    plots.save_correlation_heatmap(cols, corr, out_dir / "correlation.png")

    # total UPDRS (sum of observed parts) conditioned on peptide presence
    updrs_idx = [matrix.col_index(c) for c in UPDRS_COLS]
    part_vals = matrix.values[:, updrs_idx]
    part_mask = matrix.mask[:, updrs_idx]
    has_any = part_mask.any(axis=1)
    total = np.where(part_mask, part_vals, 0.0).sum(axis=1)

    top = features.top_peptides(cohort, min(cfg["top_peptides"],
                                            len({p.peptide_sequence
                                                 for p in cohort.peptides})))
    presence = features.peptide_presence(cohort, len(top),
                                         row_keys=matrix.row_keys)
    kde_lines = ["peptide,group,x,density"]
    curves = {}
    for j, pep in enumerate(top):
        present = presence.values[:, j] > 0
        groups = {}
        for label, rows in (("present", present & has_any),
                            ("absent", ~present & has_any)):
            samples = total[rows]
            if samples.size < 2:
                continue
            h = features.silverman_bandwidth(samples)
            grid = features.default_kde_grid(samples, h)
            est = features.kde(samples, None, grid)
            groups[label] = est
            for x, d in zip(est.grid, est.density):
                kde_lines.append(f"{pep},{label},{x!r},{d!r}")
        curves[pep] = groups
    (out_dir / "kde_curves.csv").write_text("\n".join(kde_lines) + "\n",
                                            encoding="utf-8")
    plots.save_kde_curves(curves, out_dir / "kde_curves.png")
    print(f"wrote correlation and KDE artifacts to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, TRAIN_DEFAULTS)
    kind = cfg["model"]
    if kind not in ("lstm", "kan"):
        raise InvalidConfig(f"--model must be lstm or kan, got {kind!r}")
    cohort = _load_cohort(cfg["data_dir"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)

    lag_cfg = LagConfig(horizon_months=cfg["horizon"],
                        lag_depth=cfg["lag_depth"],
                        n_presence_peptides=cfg["presence_peptides"])
    pre, tr, va, scaler = _prepare(cohort, lag_cfg, cfg["val_fraction"],
                                   cfg["seed"])
    model, model_cfg = _build_model(kind, tr.inputs.shape[1],
                                    lag_cfg.lag_depth, cfg["seed"],
                                    cfg["dropout"])
    model, history = train(model, tr, va, _train_config(kind, cfg),
                           scaler=scaler)
    report = evaluate(model, va, scaler)

    _write_model_artifacts(out_dir, kind, model, history, report)
    _write_state(out_dir, kind, model_cfg, lag_cfg, cfg, pre, scaler)
    tr.export_csv(out_dir / "train_inputs.csv", out_dir / "train_targets.csv")
    print(report.render_text())
    print(f"best epoch {history.best_epoch} of {len(history.entries)}"
          + (" (early stop)" if history.stopped_early else ""))
    return 0


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    with open(run_dir / "state.json", encoding="utf-8") as fh:
        state = json.load(fh)
    cohort = _load_cohort(args.data_dir or "data")
    out_dir = Path(args.out_dir) if args.out_dir else run_dir

    pre = FittedPreprocessor.from_json(json.dumps(state["preprocessor"]))
    lag_cfg = LagConfig(**state["lag"])
    scaler = TargetScaler.from_dict(state["target_scaler"])

    sset = features.build_supervised(cohort, pre, lag_cfg)
    matrix = dataset.to_feature_matrix(cohort)
    _, val_p = split_patients([k[0] for k in matrix.row_keys],
                              state["val_fraction"], state["seed"])
    pids = np.array([p for p, _, _ in sset.row_provenance])
    va = sset.subset(np.isin(pids, sorted(val_p)))
    if va.n_rows == 0:
        raise EmptyDataset("no validation rows for the stored split")

    kind = state["model"]
    mc = state["model_config"]
    if kind == "lstm":
        model = LstmForecaster(LstmForecasterConfig(
            input_width=mc["input_width"], hidden=mc["hidden"],
            bidirectional=mc["bidirectional"],
            attention_width=mc["attention_width"],
            head_widths=tuple(mc["head_widths"]), output=mc["output"],
            dropout=mc["dropout"]), seed=state["seed"],
            lag_depth=lag_cfg.lag_depth)
    else:
        model = KanForecaster(KanForecasterConfig(
            widths=tuple(mc["widths"]), grid_size=mc["grid_size"],
            spline_order=mc["spline_order"], output=mc["output"],
            dropout=mc["dropout"]), seed=state["seed"])
    model.set_params(load_checkpoint(run_dir / "checkpoint.bin"))

    report = evaluate(model, va, scaler)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval_report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out_dir / "eval_report.txt").write_text(report.render_text() + "\n",
                                             encoding="utf-8")
    print(report.render_text())
    return 0


def cmd_benchmark(args) -> int:
    cfg = _resolve(args, TRAIN_DEFAULTS)
    cohort = _load_cohort(cfg["data_dir"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out_dir)

    lag_cfg = LagConfig(horizon_months=cfg["horizon"],
                        lag_depth=cfg["lag_depth"],
                        n_presence_peptides=cfg["presence_peptides"])
    pre, tr, va, scaler = _prepare(cohort, lag_cfg, cfg["val_fraction"],
                                   cfg["seed"])

    rows = []
    for kind in ("lstm", "kan"):
        model, model_cfg = _build_model(kind, tr.inputs.shape[1],
                                        lag_cfg.lag_depth, cfg["seed"],
                                        cfg["dropout"])
        t0 = time.perf_counter()
        model, history = train(model, tr, va, _train_config(kind, cfg),
                               scaler=scaler)
        seconds = time.perf_counter() - t0
        report = evaluate(model, va, scaler)
        sub = out_dir / kind
        _write_model_artifacts(sub, kind, model, history, report)
        _write_state(sub, kind, model_cfg, lag_cfg, cfg, pre, scaler)
        rows.append((kind, report, history, seconds))

    csv_lines = ["model,avg_smape,avg_mse,avg_rmse,train_seconds"]
    txt_lines = [f"{'Model':<6} {'SMAPE':>9} {'MSE':>9} {'RMSE':>8} {'Time(s)':>9}"]
    for kind, report, history, seconds in rows:
        a = report.average
        csv_lines.append(f"{kind},{a.smape!r},{a.mse!r},{a.rmse!r},{seconds:.3f}")
        txt_lines.append(f"{kind:<6} {a.smape:>9.2f} {a.mse:>9.2f} "
                         f"{a.rmse:>8.3f} {seconds:>9.1f}")
    (out_dir / "benchmark.csv").write_text("\n".join(csv_lines) + "\n",
                                           encoding="utf-8")
    (out_dir / "benchmark.txt").write_text("\n".join(txt_lines) + "\n",
                                           encoding="utf-8")
    print("\n".join(txt_lines))
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _resolve(args, GRADCHECK_DEFAULTS)
    seeds = [cfg["seed"] + i for i in range(cfg["n_seeds"])]
    results = run_suite(seeds, eps=cfg["eps"], tol=cfg["tol"])
    print(f"{'family':<18} {'max rel err':>12}  result")
    for r in results:
        print(f"{r.family:<18} {r.max_rel_error:>12.3e}  "
              f"{'PASS' if r.passed else 'FAIL'}")
    if not all(r.passed for r in results):
        raise GradCheckFailed("one or more layer families failed")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(prog="pdforecast",
                     description="UPDRS progression forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--data-dir")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--config")

    p = sub.add_parser("generate", help="write a synthetic 4-CSV cohort")
    common(p)
    p.add_argument("--patients", type=int)
    p.add_argument("--visit-months")
    p.add_argument("--peptides", type=int)
    p.add_argument("--pct-skewed", type=float)
    p.add_argument("--pct-missing", type=float)
    p.add_argument("--corr-target", type=float)
    p.add_argument("--supplemental", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("profile", help="print the cohort data profile")
    common(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("analyze", help="correlation matrix and KDE curves")
    common(p)
    p.add_argument("--top-peptides", type=int)
    p.set_defaults(func=cmd_analyze)

    def train_opts(p):
        common(p)
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", type=float)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--lag-depth", type=int)
        p.add_argument("--presence-peptides", type=int)
        p.add_argument("--val-fraction", type=float)
        p.add_argument("--dropout", type=float)

    p = sub.add_parser("train", help="train one model and evaluate it")
    train_opts(p)
    p.add_argument("--model", choices=["lstm", "kan"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="re-evaluate a finished training run")
    common(p)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark",
                       help="train both models on the identical split")
    train_opts(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    common(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--n-seeds", type=int)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, ToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
