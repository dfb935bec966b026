"""Command-line interface.

Subcommands mirror the split-conformal workflow: ``generate`` synthetic
data, ``train`` the weighted softmax model, ``calibrate`` on held-out
probabilities, ``predict`` sets, ``evaluate`` them, and ``simulate`` a
Monte Carlo coverage study. ``sweep`` trains over a ladder of class weights
and reports the resulting empirical cost ratios.

Settings resolve as: command-line flag, then ``--config`` file
(``key=value`` lines), then built-in default. Exit status is 0 on success,
2 for invalid input and 3 for numerical or runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import LOCALIZED, METHODS, NAIVE, NESTED, ORACLE, calibrate, labeled_scores, oracle_sets, score_matrix, set_mask
from .core import Dataset, ValidationError, forecasts
from .io import (
    fnum,
    read_calibration,
    read_config,
    read_dataset_csv,
    read_model,
    read_predictions,
    read_probability_csv,
    write_calibration,
    write_dataset_csv,
    write_model,
    write_predictions,
    write_probability_csv,
)
from .localized import LocalizedCalibration, localized_calibrate, localized_predict_sets, set_size_table
from .metrics import (
    confusion_csv,
    confusion_from_arrays,
    coverage_from_mask,
    error_report,
    nonconformity_histogram,
    render_confusion,
    render_set_sizes,
)
from .models import CostWeights, DivergenceError, OptimizerConfig, ProbabilityTable, model_table, train_softmax
from .simulate import StudyConfig, render_study, run_study
from .synthetic import DEFAULT_COEF, RNG_ALGORITHM, GeneratorSpec, generate

log = logging.getLogger("nestedcp")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3

DEFAULTS = {
    "alpha": "0.1",
    "method": NESTED,
    "seed": "0",
    "out": ".",
    "replications": "20",
    "n": "1000",
    "n_train": "5000",
    "n_cal": "2000",
    "n_test": "20000",
    "features": "normal",
    "max_iter": "5000",
    "bins": "20",
}

# keys that matter per command; used to echo the resolved config
KEYS = {
    "generate": ("n", "seed", "features", "coef", "out"),
    "train": ("data", "weights", "max_iter", "out"),
    "calibrate": ("alpha", "method", "data", "probs", "model", "bins", "out"),
    "predict": ("alpha", "method", "calibration", "probs", "model", "data", "out"),
    "evaluate": ("predictions", "data", "out"),
    "simulate": (
        "alpha", "method", "replications", "seed", "n_train", "n_cal", "n_test",
        "features", "coef", "weights", "passthrough", "max_iter", "out",
    ),
    "sweep": ("data", "eval_data", "ladder", "max_iter", "out"),
}


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _resolve(args: argparse.Namespace) -> dict[str, str]:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if k in ("command", "config", "func", "verbose") or v is None or v is False:
            continue
        cfg[k] = "true" if v is True else str(v)
    return cfg


def _header(command: str, cfg: dict[str, str]) -> list[str]:
    lines = [f"nestedcp {__version__} {command}"]
    lines += [f"{k}={cfg[k]}" for k in KEYS[command] if k in cfg]
    return lines


def _need(cfg, key):
    if not cfg.get(key):
        raise CLIError(f"--{key.replace('_', '-')} is required")
    path = Path(cfg[key])
    if not path.exists():
        raise CLIError(f"{key} file not found: {path}")
    return path


def _float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise CLIError(f"--{key.replace('_', '-')} must be a number, got {cfg[key]!r}") from None


def _int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise CLIError(f"--{key.replace('_', '-')} must be an integer, got {cfg[key]!r}") from None


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _coef(cfg):
    if not cfg.get("coef"):
        return DEFAULT_COEF
    try:
        return tuple(tuple(float(v) for v in row.split(",")) for row in cfg["coef"].split(";"))
    except ValueError:
        raise CLIError(f"cannot parse --coef {cfg['coef']!r}; rows are ';'-separated lists of numbers") from None


def _write_report(path: Path, header: list[str], body: str) -> None:
    text = "".join(f"# {h}\n" for h in header) + "\n" + body
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _probabilities(cfg, data: Dataset | None) -> ProbabilityTable:
    """Probability rows from ``--probs`` or from ``--model`` applied to ``--data``."""
    if cfg.get("probs"):
        return read_probability_csv(_need(cfg, "probs"))
    if cfg.get("model"):
        if data is None or data.d == 0:
            raise CLIError("--model needs --data with feature columns")
        model = read_model(_need(cfg, "model"))
        return model_table(model, data)
    raise CLIError("either --probs or --model is required")


def _outcomes(cfg, K: int | None) -> Dataset:
    return read_dataset_csv(_need(cfg, "data"), K, require_features=False)


# ---- commands -----------------------------------------------------------


def cmd_generate(cfg):
    spec = GeneratorSpec(_coef(cfg), n=_int(cfg, "n"), seed=_int(cfg, "seed"), features=cfg["features"])
    data, truth = generate(spec)
    out = _outdir(cfg)
    write_dataset_csv(out / "data.csv", data)
    write_probability_csv(out / "true_probs.csv", truth)
    _write_report(out / "generate_report.txt", _header("generate", cfg), f"rng={RNG_ALGORITHM}\nK={spec.K}\nd={spec.d}\nn={spec.n}\n")
    return EXIT_OK


def _train_report(model, data, weights) -> str:
    P = model.predict_proba(data.X)
    table = confusion_from_arrays(data.y, forecasts(P), data.K)
    rep = error_report(table)
    trace = model.loss_trace
    marks = sorted({0, len(trace) // 4, len(trace) // 2, 3 * len(trace) // 4, len(trace) - 1})
    lines = [
        f"weights={weights}",
        f"iterations={model.iterations}",
        f"converged={str(model.converged).lower()}",
        f"initial_loss={fnum(trace[0])}",
        f"final_loss={fnum(model.final_loss)}",
        "loss_curve=" + ";".join(f"{i}:{trace[i]:.8f}" for i in marks),
        "",
        "held-in confusion table",
        render_confusion(table),
        "",
        "held-in empirical cost ratios: counts[a,p] / counts[p,a]",
        "actual_a,pred_p,actual_b,pred_q,ratio",
    ]
    for (a, p, b, q), r in rep.cost_ratios.items():
        lines.append(f"{a},{p},{b},{q},{'NA' if r is None else f'{r:.4f}'}")
    return "\n".join(lines) + "\n"


def cmd_train(cfg):
    data = read_dataset_csv(_need(cfg, "data"))
    weights = CostWeights.parse(cfg["weights"]) if cfg.get("weights") else CostWeights.ones(data.K)
    if weights.K != data.K:
        raise CLIError(f"--weights gives {weights.K} values but the data has K={data.K} classes")
    out = _outdir(cfg)
    model = train_softmax(data, weights, OptimizerConfig(max_iter=_int(cfg, "max_iter")))
    write_model(out / "model.txt", model)
    _write_report(out / "train_report.txt", _header("train", cfg), _train_report(model, data, weights))
    return EXIT_OK


def cmd_sweep(cfg):
    data = read_dataset_csv(_need(cfg, "data"))
    ev = read_dataset_csv(_need(cfg, "eval_data"), data.K) if cfg.get("eval_data") else data
    if not cfg.get("ladder"):
        raise CLIError("--ladder is required, e.g. '1,1,1;1,1,5;1,1,10'")
    ladder = [CostWeights.parse(w) for w in cfg["ladder"].split(";")]
    out = _outdir(cfg)
    K = data.K
    cells = [(a, p) for a in range(K) for p in range(K) if a != p]
    lines = ["weights," + ",".join(f"r{a}{p}" for a, p in cells) + ",forecast_counts"]
    for w in ladder:
        if w.K != K:
            raise CLIError(f"ladder entry {w} has {w.K} weights, expected {K}")
        model = train_softmax(data, w, OptimizerConfig(max_iter=_int(cfg, "max_iter")))
        fc = forecasts(model.predict_proba(ev.X))
        rep = error_report(confusion_from_arrays(ev.y, fc, K))
        ratios = [rep.cost_ratios[(a, p, p, a)] for a, p in cells]
        counts = ";".join(str(c) for c in np.bincount(fc, minlength=K))
        lines.append(f"\"{w}\"," + ",".join("NA" if r is None else f"{r:.4f}" for r in ratios) + f",{counts}")
    _write_report(out / "sweep_report.txt", _header("sweep", cfg), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_calibrate(cfg):
    method = cfg["method"]
    if method not in (NESTED, LOCALIZED):
        raise CLIError(f"calibrate supports --method nested or localized, not {method!r}")
    alpha = _float(cfg, "alpha")
    table = _probabilities(cfg, read_dataset_csv(_need(cfg, "data"), require_features=False) if cfg.get("model") else None)
    outcomes = _outcomes(cfg, table.K)
    P = table.align(outcomes.ids)
    scores = labeled_scores(P, outcomes.y)
    if method == NESTED:
        cal = calibrate(scores, alpha)
        for_log = cal.warning
    else:
        cal = localized_calibrate(P, outcomes.y, alpha, table.K)
        for_log = cal.warnings
    if for_log:
        log.warning("calibration warning: %s", for_log)
    out = _outdir(cfg)
    write_calibration(out / "calibration.txt", cal, table.K)
    hist = nonconformity_histogram(scores, _int(cfg, "bins"))
    lines = ["non-conformity histogram (1 - s over [0, 1])", "bin_low,bin_high,count"]
    lines += [f"{lo:.4f},{hi:.4f},{c}" for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)]
    _write_report(out / "calibration_report.txt", _header("calibrate", cfg), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_predict(cfg):
    method = cfg["method"]
    if method not in METHODS:
        raise CLIError(f"unknown --method {method!r}; choose from {', '.join(METHODS)}")
    data = read_dataset_csv(_need(cfg, "data"), require_features=False) if cfg.get("model") else None
    table = _probabilities(cfg, data)
    P = table.probs
    fc = forecasts(P) if len(table) else np.empty(0, dtype=np.int64)
    if method in (NESTED, LOCALIZED):
        cal, K = read_calibration(_need(cfg, "calibration"))
        if K != table.K:
            raise CLIError(f"calibration has K={K} but probabilities have K={table.K}")
        if isinstance(cal, LocalizedCalibration):
            mask = localized_predict_sets(P, cal)
            gamma = cal.gammas[fc]
        else:
            mask = set_mask(score_matrix(P), cal.gamma_hat)
            gamma = np.full(len(table), cal.gamma_hat)
    elif method == NAIVE:
        alpha = _float(cfg, "alpha")
        mask = set_mask(score_matrix(P), alpha)
        gamma = np.full(len(table), alpha)
    else:
        alpha = _float(cfg, "alpha")
        mask = oracle_sets(P, alpha)
        gamma = np.where(mask, P, np.inf).min(axis=1) if len(table) else np.empty(0)
    if not len(table):
        mask = np.zeros((0, table.K), dtype=bool)
    write_predictions(_outdir(cfg) / "predictions.csv", table.ids, fc, mask, gamma)
    return EXIT_OK


def cmd_evaluate(cfg):
    ids, fc, mask = read_predictions(_need(cfg, "predictions"))
    outcomes = _outcomes(cfg, None)
    K = max(mask.shape[1], outcomes.K)
    if mask.shape[1] < K:
        mask = np.hstack([mask, np.zeros((len(ids), K - mask.shape[1]), dtype=bool)])
    pos = {k: i for i, k in enumerate(outcomes.ids.tolist())}
    missing = [i for i in ids.tolist() if i not in pos]
    if missing or len(ids) != len(outcomes):
        what = f"id {missing[0]!r} has no outcome" if missing else "files list different numbers of cases"
        raise CLIError(f"prediction and outcome files do not match: {what}")
    y = outcomes.y[[pos[i] for i in ids.tolist()]]
    if (fc < 0).any() or (fc >= K).any():
        raise CLIError("forecast label out of range")

    table = confusion_from_arrays(y, fc, K)
    rep = error_report(table)
    sizes = mask.sum(axis=1)
    out = _outdir(cfg)
    lines = ["confusion table (rows: actual, columns: forecast)", render_confusion(table), ""]
    lines.append("class,classification_error,forecasting_error")
    for j in range(K):
        ce, fe = rep.classification[j], rep.forecasting[j]
        lines.append(f"{j},{'NA' if ce is None else f'{ce:.6f}'},{'NA' if fe is None else f'{fe:.6f}'}")
    lines.append("")
    if len(y):
        lines.append(f"coverage={coverage_from_mask(mask, y):.6f}")
        lines.append(f"n={len(y)}")
        covered = mask[np.arange(len(y)), y]
        lines.append("forecast,n,coverage")
        for j in range(K):
            sel = fc == j
            lines.append(f"{j},{int(sel.sum())},{covered[sel].mean():.6f}" if sel.any() else f"{j},0,NA")
        lines += ["", "set size proportions by forecast", render_set_sizes(set_size_table(np.maximum(sizes, 1), fc, K))]
    else:
        lines.append("coverage=NA")
        lines.append("n=0")
    _write_report(out / "evaluation.txt", _header("evaluate", cfg), "\n".join(lines) + "\n")
    (out / "confusion.csv").write_text(confusion_csv(table), encoding="utf-8")
    return EXIT_OK


def cmd_simulate(cfg):
    methods = tuple(m.strip() for m in cfg["method"].split(","))
    for m in methods:
        if m not in METHODS:
            raise CLIError(f"unknown method {m!r}")
    try:
        alphas = tuple(float(a) for a in cfg["alpha"].split(","))
    except ValueError:
        raise CLIError(f"--alpha must be a number or comma list, got {cfg['alpha']!r}") from None
    spec = GeneratorSpec(_coef(cfg), features=cfg["features"])
    weights = CostWeights.parse(cfg["weights"]) if cfg.get("weights") else None
    study = StudyConfig(
        spec,
        n_train=_int(cfg, "n_train"),
        n_cal=_int(cfg, "n_cal"),
        n_test=_int(cfg, "n_test"),
        replications=_int(cfg, "replications"),
        alphas=alphas,
        methods=methods,
        weights=weights,
        passthrough=cfg.get("passthrough", "false").lower() in ("1", "true", "yes"),
        seed=_int(cfg, "seed"),
        optimizer=OptimizerConfig(max_iter=_int(cfg, "max_iter")),
    )
    out = _outdir(cfg)
    try:
        report = run_study(study)
    except ValidationError:
        raise
    except Exception as exc:
        raise CLIError(f"replication failed: {exc}", EXIT_RUNTIME) from exc
    (out / "simulation.txt").write_text(render_study(report, _header("simulate", cfg)), encoding="utf-8")
    return EXIT_OK


# ---- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestedcp", description="Nested and localized conformal prediction sets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key=value file; flags override it")
        p.add_argument("--out", help="output directory (default: current directory)")
        return p

    p = add("generate", cmd_generate, "Write a synthetic dataset and its true class probabilities.")
    p.add_argument("--n", type=int, help="number of cases (default 1000)")
    p.add_argument("--seed", type=int, help="64-bit generator seed (default 0)")
    p.add_argument("--features", choices=["normal", "uniform"], help="feature distribution (default normal)")
    p.add_argument("--coef", help="true coefficients, rows 'b0,b1,...' joined by ';' (default: built-in K=3, d=4)")

    p = add("train", cmd_train, "Fit the class-weighted softmax model on a dataset CSV.")
    p.add_argument("--data", help="dataset CSV: id,y,x_1,...,x_d")
    p.add_argument("--weights", help="per-class loss weights w0,w1,... (default all ones)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="gradient-descent iteration cap (default 5000)")

    p = add("sweep", cmd_sweep, "Train once per weight vector and tabulate empirical cost ratios.")
    p.add_argument("--data", help="training dataset CSV")
    p.add_argument("--eval-data", dest="eval_data", help="dataset CSV to tabulate on (default: training data)")
    p.add_argument("--ladder", help="weight vectors joined by ';', e.g. '1,1,1;1,1,5'")
    p.add_argument("--max-iter", dest="max_iter", type=int)

    p = add("calibrate", cmd_calibrate, "Calibrate a nested or localized threshold on held-out cases.")
    p.add_argument("--alpha", type=float, help="miscoverage level in (0, 1) (default 0.1)")
    p.add_argument("--method", choices=[NESTED, LOCALIZED], help="default nested")
    p.add_argument("--data", help="outcomes CSV (id,y[,x_...]) for the calibration cases")
    p.add_argument("--probs", help="probability CSV: id,p_0,...,p_{K-1}")
    p.add_argument("--model", help="model file; probabilities are computed from --data features")
    p.add_argument("--bins", type=int, help="histogram bins for the non-conformity report (default 20)")

    p = add("predict", cmd_predict, "Write prediction sets: id,forecast,set,set_size,gamma_used.")
    p.add_argument("--alpha", type=float, help="level for the naive and oracle methods")
    p.add_argument("--method", choices=list(METHODS), help="default nested; nested/localized read --calibration")
    p.add_argument("--calibration", help="calibration file from 'calibrate'")
    p.add_argument("--probs", help="probability CSV")
    p.add_argument("--model", help="model file (with --data)")
    p.add_argument("--data", help="dataset CSV with features, used with --model")

    p = add("evaluate", cmd_evaluate, "Confusion table, error rates, coverage and set-size proportions.")
    p.add_argument("--predictions", help="prediction CSV from 'predict'")
    p.add_argument("--data", help="outcomes CSV (id,y[,x_...])")

    p = add("simulate", cmd_simulate, "Monte Carlo coverage study on synthetic data.")
    p.add_argument("--alpha", help="level or comma list (default 0.1)")
    p.add_argument("--method", help="method or comma list from nested,localized,naive,oracle (default nested)")
    p.add_argument("--replications", type=int, help="number of replications R (default 20)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-cal", dest="n_cal", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--features", choices=["normal", "uniform"])
    p.add_argument("--coef", help="true coefficients (see 'generate')")
    p.add_argument("--weights", help="training loss weights")
    p.add_argument("--passthrough", action="store_true", help="use the true probabilities instead of training")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _resolve(args)
        return args.func(cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DivergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
