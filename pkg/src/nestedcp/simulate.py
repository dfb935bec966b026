"""Monte Carlo coverage study on synthetic data.

Each replication draws a fresh dataset, splits it into training,
calibration and test parts, fits the weighted softmax model (or uses the
true conditionals directly), calibrates, and scores coverage on the test
part overall and within each forecast partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conformal import (
    LOCALIZED,
    NAIVE,
    NESTED,
    ORACLE,
    calibrate,
    labeled_scores,
    oracle_sets,
    predict_sets,
    score_matrix,
    set_mask,
)
from .core import ValidationError, forecasts
from .localized import localized_calibrate, localized_predict_sets
from .models import CostWeights, OptimizerConfig, train_softmax
from .synthetic import RNG_ALGORITHM, GeneratorSpec, generate, split_counts


@dataclass(frozen=True)
class StudyConfig:
    spec: GeneratorSpec
    n_train: int = 5000
    n_cal: int = 2000
    n_test: int = 20000
    replications: int = 20
    alphas: tuple[float, ...] = (0.05, 0.1, 0.3)
    methods: tuple[str, ...] = (NESTED, LOCALIZED)
    weights: CostWeights | None = None
    passthrough: bool = False
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("need at least one replication")
        if min(self.n_cal, self.n_test) < 1 or self.n_train < (0 if self.passthrough else 1):
            raise ValidationError("split sizes must be positive")
        for m in self.methods:
            if m not in (NESTED, LOCALIZED, ORACLE, NAIVE):
                raise ValidationError(f"unknown method {m!r}")


@dataclass
class MethodResult:
    method: str
    alpha: float
    coverage: float
    n_test: int
    mean_size: float
    thresholds: tuple[float, ...]
    partition_n: tuple[int, ...]
    partition_coverage: tuple[float | None, ...]
    size_counts: np.ndarray


@dataclass
class Replication:
    index: int
    seed: int
    model_error: float
    baseline_error: float
    results: list[MethodResult]


def replication_seeds(master: int, R: int) -> list[tuple[int, int]]:
    """Per-replication ``(data_seed, split_seed)`` pairs derived from ``master``."""
    children = np.random.SeedSequence(int(master)).spawn(R)
    return [tuple(int(v) for v in c.generate_state(2, np.uint64)) for c in children]


def _partition_stats(covered: np.ndarray, fc: np.ndarray, K: int):
    ns, covs = [], []
    for j in range(K):
        sel = fc == j
        n = int(sel.sum())
        ns.append(n)
        covs.append(float(covered[sel].mean()) if n else None)
    return tuple(ns), tuple(covs)


def _score(method, alpha, mask, y, fc, K, thresholds):
    covered = mask[np.arange(len(y)), y]
    sizes = mask.sum(axis=1)
    size_counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(size_counts, (fc, np.maximum(sizes, 1) - 1), 1)
    pn, pc = _partition_stats(covered, fc, K)
    return MethodResult(method, alpha, float(covered.mean()), len(y), float(sizes.mean()), thresholds, pn, pc, size_counts)


def run_replication(cfg: StudyConfig, index: int, seeds: tuple[int, int]) -> Replication:
    spec = cfg.spec
    n_train = 0 if cfg.passthrough else cfg.n_train
    n_total = n_train + cfg.n_cal + cfg.n_test
    gen = GeneratorSpec(spec.coef, n=n_total, seed=seeds[0], features=spec.features, low=spec.low, high=spec.high)
    data, truth = generate(gen)
    i_tr, i_cal, i_te = split_counts(n_total, [n_train, cfg.n_cal, cfg.n_test], seeds[1])
    K = spec.K

    if cfg.passthrough:
        P_cal, P_te = truth.probs[i_cal], truth.probs[i_te]
        majority = int(np.argmax(np.bincount(data.y[i_cal], minlength=K)))
    else:
        model = train_softmax(data.subset(i_tr), cfg.weights, cfg.optimizer)
        P_cal, P_te = model.predict_proba(data.X[i_cal]), model.predict_proba(data.X[i_te])
        majority = int(np.argmax(np.bincount(data.y[i_tr], minlength=K)))
    y_cal, y_te = data.y[i_cal], data.y[i_te]
    fc_te = forecasts(P_te)
    model_error = float((fc_te != y_te).mean())
    baseline_error = float((y_te != majority).mean())

    s_cal = labeled_scores(P_cal, y_cal)
    results = []
    for alpha in cfg.alphas:
        for method in cfg.methods:
            if method == NESTED:
                cal = calibrate(s_cal, alpha)
                mask, th = predict_sets(P_te, cal), (cal.gamma_hat,)
            elif method == LOCALIZED:
                loc = localized_calibrate(P_cal, y_cal, alpha, K)
                mask, th = localized_predict_sets(P_te, loc), tuple(loc.gammas.tolist())
            elif method == ORACLE:
                mask, th = oracle_sets(truth.probs[i_te], alpha), ()
            else:
                # uncalibrated: threshold the family at gamma = alpha
                mask, th = set_mask(score_matrix(P_te), alpha), (alpha,)
            results.append(_score(method, alpha, mask, y_te, fc_te, K, th))
    return Replication(index, seeds[0], model_error, baseline_error, results)


@dataclass
class StudyReport:
    config: StudyConfig
    replications: list[Replication]

    def coverages(self, method: str, alpha: float) -> np.ndarray:
        return np.array([r.coverage for rep in self.replications for r in rep.results if r.method == method and r.alpha == alpha])

    def results(self, method: str, alpha: float) -> list[MethodResult]:
        return [r for rep in self.replications for r in rep.results if r.method == method and r.alpha == alpha]

    def summary(self) -> list[dict]:
        rows = []
        for alpha in self.config.alphas:
            for method in self.config.methods:
                res = self.results(method, alpha)
                cov = np.array([r.coverage for r in res])
                n = res[0].n_test
                rows.append(
                    {
                        "method": method,
                        "alpha": alpha,
                        "mean_coverage": float(cov.mean()),
                        "min_coverage": float(cov.min()),
                        "se_single": math.sqrt(alpha * (1 - alpha) / n),
                        "se_mean": math.sqrt(alpha * (1 - alpha) / (n * len(cov))),
                        "mean_size": float(np.mean([r.mean_size for r in res])),
                    }
                )
        return rows


def run_study(cfg: StudyConfig) -> StudyReport:
    seeds = replication_seeds(cfg.seed, cfg.replications)
    reps = [run_replication(cfg, i, s) for i, s in enumerate(seeds)]
    return StudyReport(cfg, reps)


def _f(x: float | None, digits: int = 6) -> str:
    return "NA" if x is None else f"{x:.{digits}f}"


def render_study(report: StudyReport, header: Sequence[str] = ()) -> str:
    cfg = report.config
    lines = [f"# {h}" for h in header]
    lines.append(f"# rng={RNG_ALGORITHM}")
    lines.append(
        f"# K={cfg.spec.K} d={cfg.spec.d} n_train={0 if cfg.passthrough else cfg.n_train} "
        f"n_cal={cfg.n_cal} n_test={cfg.n_test} R={cfg.replications} passthrough={str(cfg.passthrough).lower()}"
    )
    lines.append("")
    lines.append("summary")
    lines.append("method,alpha,target,mean_coverage,min_coverage,se_single,se_mean,mean_set_size")
    for row in report.summary():
        lines.append(
            f"{row['method']},{row['alpha']!r},{_f(1 - row['alpha'])},{_f(row['mean_coverage'])},"
            f"{_f(row['min_coverage'])},{_f(row['se_single'])},{_f(row['se_mean'])},{_f(row['mean_size'], 4)}"
        )
    lines.append("")
    lines.append("partitions")
    lines.append("method,alpha,forecast,mean_n,mean_coverage,min_coverage,se_at_mean_n")
    K = cfg.spec.K
    for alpha in cfg.alphas:
        for method in cfg.methods:
            res = report.results(method, alpha)
            for j in range(K):
                ns = [r.partition_n[j] for r in res]
                cs = [r.partition_coverage[j] for r in res if r.partition_coverage[j] is not None]
                mn = float(np.mean(ns))
                se = math.sqrt(alpha * (1 - alpha) / mn) if mn > 0 else None
                lines.append(
                    f"{method},{alpha!r},{j},{mn:.1f},{_f(float(np.mean(cs)) if cs else None)},"
                    f"{_f(min(cs) if cs else None)},{_f(se)}"
                )
    lines.append("")
    lines.append("replications")
    lines.append("replication,seed,model_error,baseline_error,method,alpha,coverage,mean_set_size,thresholds")
    for rep in report.replications:
        for r in rep.results:
            th = ";".join(_f(t) for t in r.thresholds)
            lines.append(
                f"{rep.index},{rep.seed},{_f(rep.model_error)},{_f(rep.baseline_error)},{r.method},{r.alpha!r},"
                f"{_f(r.coverage)},{_f(r.mean_size, 4)},{th}"
            )
    return "\n".join(lines) + "\n"
