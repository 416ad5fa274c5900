"""Cross-period stability analysis of the fitted shape functions.

For each participant and feature, the common curve is compared with the
common-plus-interaction curve on the ensemble grid: their Pearson r is the
stability score (1 = unchanged relationship) and the fraction of grid points
with disjoint 95% bands flags meaningful shifts. A four-case train/test
table quantifies how much accuracy a first-period model loses on
second-period data.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .ebm import EbmConfig, EnsembleFit, _seed_entropy, evaluate, fit_ebm, fit_ensemble
from .tables import FeatureTable

log = logging.getLogger(__name__)

CASES = ("a", "b", "c", "d")
# (train periods, test period); "d" trains on both periods
CASE_SPLITS = {
    "a": ((0,), 0),
    "b": ((0,), 1),
    "c": ((1,), 1),
    "d": ((0, 1), 1),
}


class InsufficientDataError(ValueError):
    pass


def shape_correlation(curve_a: np.ndarray, curve_b: np.ndarray) -> float | None:
    """Pearson r between two curves on a common grid; None if either is constant."""
    a = np.asarray(curve_a, dtype=float)
    b = np.asarray(curve_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("curves must be one-dimensional and of equal length")
    if len(a) < 3:
        raise ValueError("need at least 3 grid points")
    da, db = a - np.mean(a), b - np.mean(b)
    sa, sb = np.sqrt(np.mean(da * da)), np.sqrt(np.mean(db * db))
    if sa == 0.0 or sb == 0.0:
        return None
    return float(np.clip(np.mean(da * db) / (sa * sb), -1.0, 1.0))


def ci_nonoverlap(
    band_a: tuple[np.ndarray, np.ndarray],
    band_b: tuple[np.ndarray, np.ndarray],
) -> float:
    """Fraction of grid points where the two closed intervals are disjoint."""
    lo_a, hi_a = (np.asarray(x, dtype=float) for x in band_a)
    lo_b, hi_b = (np.asarray(x, dtype=float) for x in band_b)
    disjoint = (hi_a < lo_b) | (hi_b < lo_a)
    return float(np.mean(disjoint))


@dataclass(frozen=True)
class StabilitySummary:
    median: float
    mean: float
    q1: float
    q3: float
    n: int


def aggregate_stability(r_by_feature: dict[str, list[float]]) -> dict[str, StabilitySummary]:
    """Order statistics of the per-participant r values of each feature."""
    out = {}
    for feat, values in r_by_feature.items():
        vals = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
        if len(vals) == 0:
            continue
        out[feat] = StabilitySummary(
            median=float(np.median(vals)),
            mean=float(np.mean(vals)),
            q1=float(np.percentile(vals, 25)),
            q3=float(np.percentile(vals, 75)),
            n=len(vals),
        )
    return out


@dataclass
class CaseResult:
    accuracy_mean: float
    accuracy_se: float
    auc_mean: float | None
    auc_se: float | None
    n_repeats: int
    n_auc: int


def _se(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def cross_period_cases(
    X: np.ndarray,
    y: np.ndarray,
    periods: np.ndarray,
    features: list[str],
    config: EbmConfig = EbmConfig(),
    n_repeats: int = 100,
    n_per_period: int = 90,
    seed=0,
) -> dict[str, CaseResult]:
    """Four train/test combinations, each over repeated disjoint splits.

    Case (a) trains and tests inside the first period, (b) transfers a
    first-period model to the second, (c) stays inside the second, and (d)
    trains on both periods and tests on the second. Every repeat draws
    ``n_per_period`` training rows per training period and tests on the
    remaining rows of the test period. Case models carry no interaction
    terms so single-period training is well-defined and the cases stay
    comparable.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    periods = np.asarray(periods, dtype=int)
    idx_by_period = [np.where(periods == p)[0] for p in (0, 1)]
    for p in (0, 1):
        if len(idx_by_period[p]) < n_per_period + 1:
            raise InsufficientDataError(
                f"period {p + 1} has {len(idx_by_period[p])} rows; "
                f"need more than {n_per_period}"
            )
    case_config = EbmConfig(
        rounds=config.rounds,
        learning_rate=config.learning_rate,
        max_bins=config.max_bins,
        inner_bags=config.inner_bags,
        fit_interactions=False,
    )
    results = {}
    for case_idx, case in enumerate(CASES):
        train_periods, test_period = CASE_SPLITS[case]
        accs, aucs = [], []
        for rep in range(n_repeats):
            split_child, fit_child = np.random.SeedSequence(
                [_seed_entropy(seed), case_idx, rep]
            ).spawn(2)
            rng = np.random.default_rng(split_child)
            train = np.concatenate([
                rng.choice(idx_by_period[p], n_per_period, replace=False)
                for p in train_periods
            ])
            test = np.setdiff1d(idx_by_period[test_period], train)
            assert len(np.intersect1d(train, test)) == 0
            model = fit_ebm(
                X[train], y[train], periods[train], features, case_config, seed=fit_child
            )
            m = evaluate(model, X[test], y[test], periods[test])
            accs.append(m["accuracy"])
            if m["auc"] is not None:
                aucs.append(m["auc"])
        accs_arr = np.asarray(accs)
        aucs_arr = np.asarray(aucs)
        results[case] = CaseResult(
            accuracy_mean=float(np.mean(accs_arr)),
            accuracy_se=_se(accs_arr),
            auc_mean=float(np.mean(aucs_arr)) if len(aucs_arr) else None,
            auc_se=_se(aucs_arr) if len(aucs_arr) else None,
            n_repeats=n_repeats,
            n_auc=len(aucs_arr),
        )
    return results


def participant_entropy(participant_id: str) -> int:
    digest = hashlib.sha256(participant_id.encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class ParticipantDrift:
    participant: str
    r: dict[str, float | None]                 # Pearson r between mean curves
    r_per_repeat_median: dict[str, float | None]
    ci_nonoverlap_fraction: dict[str, float]
    cases: dict[str, CaseResult] | None
    case_skip_reason: str | None
    ensemble: EnsembleFit


@dataclass
class DriftReport:
    features: list[str]
    participants: list[ParticipantDrift]
    aggregates: dict[str, StabilitySummary]


def analyze_participant(
    table: FeatureTable,
    participant: str,
    features: list[str],
    config: EbmConfig = EbmConfig(),
    n_repeats: int = 100,
    n_per_period: int = 90,
    grid_points: int = 64,
    seed=0,
) -> ParticipantDrift:
    """Ensemble shapes, stability metrics and the case table for one participant."""
    rows = table.subset(table.participants == participant)
    rows = rows.subset(rows.complete_rows(features))
    X = rows.matrix(features)
    y = rows.labels
    periods = rows.periods
    p_entropy = participant_entropy(participant)

    ensemble = fit_ensemble(
        X, y, periods, features, config,
        n_repeats=n_repeats, n_per_period=n_per_period, grid_points=grid_points,
        seed=np.random.SeedSequence([_seed_entropy(seed), p_entropy, 0]),
    )
    r: dict[str, float | None] = {}
    r_rep: dict[str, float | None] = {}
    ci_frac: dict[str, float] = {}
    for f in features:
        mean_com = ensemble.mean_curve(f, "com")
        mean_total = ensemble.mean_curve(f, "total")
        r[f] = shape_correlation(mean_com, mean_total)
        per_rep = [
            shape_correlation(ensemble.com_curves[f][i], ensemble.total_curves[f][i])
            for i in range(ensemble.n_repeats)
        ]
        finite = [v for v in per_rep if v is not None]
        r_rep[f] = float(np.median(finite)) if finite else None
        ci_frac[f] = ci_nonoverlap(ensemble.band(f, "com"), ensemble.band(f, "total"))

    cases: dict[str, CaseResult] | None
    skip_reason: str | None = None
    try:
        cases = cross_period_cases(
            X, y, periods, features, config,
            n_repeats=n_repeats, n_per_period=n_per_period,
            seed=np.random.SeedSequence([_seed_entropy(seed), p_entropy, 1]),
        )
    except InsufficientDataError as err:
        log.info("case table skipped for %s: %s", participant, err)
        cases, skip_reason = None, str(err)

    return ParticipantDrift(
        participant=participant,
        r=r,
        r_per_repeat_median=r_rep,
        ci_nonoverlap_fraction=ci_frac,
        cases=cases,
        case_skip_reason=skip_reason,
        ensemble=ensemble,
    )


def analyze_drift(
    table: FeatureTable,
    features: list[str],
    config: EbmConfig = EbmConfig(),
    n_repeats: int = 100,
    n_per_period: int = 90,
    grid_points: int = 64,
    seed=0,
) -> DriftReport:
    participants = table.participant_ids()
    results = [
        analyze_participant(
            table, pid, features, config,
            n_repeats=n_repeats, n_per_period=n_per_period,
            grid_points=grid_points, seed=seed,
        )
        for pid in participants
    ]
    r_by_feature = {
        f: [res.r[f] for res in results if res.r[f] is not None] for f in features
    }
    return DriftReport(
        features=list(features),
        participants=results,
        aggregates=aggregate_stability(r_by_feature),
    )


# --- serialization ---------------------------------------------------------------

def report_to_dict(report: DriftReport) -> dict:
    def case_dict(c: CaseResult) -> dict:
        return {
            "accuracy": c.accuracy_mean,
            "accuracy_se": c.accuracy_se,
            "auc": c.auc_mean,
            "auc_se": c.auc_se,
            "n_repeats": c.n_repeats,
            "n_auc": c.n_auc,
        }

    return {
        "features": report.features,
        "participants": {
            res.participant: {
                "r": res.r,
                "r_per_repeat_median": res.r_per_repeat_median,
                "ci_nonoverlap_fraction": res.ci_nonoverlap_fraction,
                "cases": {c: case_dict(v) for c, v in res.cases.items()} if res.cases else None,
                "case_skip_reason": res.case_skip_reason,
                "degraded_ensemble": res.ensemble.degraded,
            }
            for res in report.participants
        },
        "aggregates": {
            f: {"median": s.median, "mean": s.mean, "q1": s.q1, "q3": s.q3, "n": s.n}
            for f, s in report.aggregates.items()
        },
    }


SHAPES_CSV_HEADER = (
    "participant,feature,grid_x,mean_com,lo_com,hi_com,mean_total,lo_total,hi_total"
)
STABILITY_CSV_HEADER = "feature,participant,r"


def shapes_to_csv(report: DriftReport) -> str:
    lines = [SHAPES_CSV_HEADER]
    for res in report.participants:
        ens = res.ensemble
        for f in report.features:
            grid = ens.grids[f]
            mean_com = ens.mean_curve(f, "com")
            lo_com, hi_com = ens.band(f, "com")
            mean_total = ens.mean_curve(f, "total")
            lo_total, hi_total = ens.band(f, "total")
            for i in range(len(grid)):
                lines.append(",".join([
                    res.participant, f,
                    repr(float(grid[i])),
                    repr(float(mean_com[i])), repr(float(lo_com[i])), repr(float(hi_com[i])),
                    repr(float(mean_total[i])), repr(float(lo_total[i])), repr(float(hi_total[i])),
                ]))
    return "\n".join(lines) + "\n"


def stability_to_csv(report: DriftReport) -> str:
    lines = [STABILITY_CSV_HEADER]
    for f in report.features:
        for res in report.participants:
            r = res.r.get(f)
            lines.append(f"{f},{res.participant},{'' if r is None else repr(r)}")
    return "\n".join(lines) + "\n"
