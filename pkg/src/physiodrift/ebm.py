"""Boosted additive logistic model with period-interaction shape functions.

The log-odds of the binary target decompose as

    logit(p) = intercept + sum_i f_com_i(x_i) + delta * sum_i f_int_i(x_i)

where ``delta`` is 0 for first-period rows and 1 for second-period rows.
Shapes are piecewise-constant over per-feature quantile bins and are learned
by cyclic gradient boosting: every round visits each common term, then each
interaction term (the latter fit on second-period rows only). Term updates
are bin-wise means of the logistic-loss residual, averaged over inner
bootstrap bags, scaled by the learning rate, and applied only when they do
not increase the training loss, which keeps the per-round loss monotone
non-increasing even with bagging noise.

Ensembles refit the model on repeated per-period subsamples and summarize
each shape with its pointwise mean and 2.5/97.5 percentile band on a fixed
evaluation grid.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

SERIALIZATION_VERSION = 1


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class BinSpec:
    """Quantile discretization of one feature; values map to exactly one bin,
    values beyond the extreme cuts clamp to the edge bins."""

    feature: str
    cuts: np.ndarray  # strictly increasing interior cut points

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        if cuts.size and np.any(np.diff(cuts) <= 0):
            raise ValueError("cut points must be strictly increasing")
        object.__setattr__(self, "cuts", cuts)

    @property
    def n_bins(self) -> int:
        return len(self.cuts) + 1

    def assign(self, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.cuts, np.asarray(values, dtype=float), side="left")


def bin_feature(values: np.ndarray, max_bins: int = 32, feature: str = "") -> BinSpec:
    """Equal-frequency cuts (midpoint quantiles), deduplicated, <= max_bins bins.

    When the feature has no more distinct values than the bin budget, every
    distinct value gets its own bin (cuts halfway between neighbours);
    quantile cuts on discrete data would collide with the values themselves.
    """
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("need at least one finite value to bin")
    vmin, vmax = float(np.min(x)), float(np.max(x))
    if vmin == vmax or max_bins < 2:
        return BinSpec(feature=feature, cuts=np.empty(0))
    distinct = np.unique(x)
    if len(distinct) <= max_bins:
        cuts = (distinct[:-1] + distinct[1:]) / 2.0
    else:
        qs = np.arange(1, max_bins) / max_bins
        cuts = np.unique(np.quantile(x, qs, method="midpoint"))
        cuts = cuts[(cuts > vmin) & (cuts < vmax)]
    return BinSpec(feature=feature, cuts=cuts)


@dataclass(frozen=True)
class ShapeFunction:
    feature: str
    bins: BinSpec
    values: np.ndarray  # per-bin additive log-odds contribution

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if len(vals) != self.bins.n_bins:
            raise ValueError(
                f"{self.feature}: {len(vals)} values for {self.bins.n_bins} bins"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{self.feature}: non-finite shape values")
        object.__setattr__(self, "values", vals)

    def lookup(self, x: np.ndarray) -> np.ndarray:
        return self.values[self.bins.assign(x)]


@dataclass(frozen=True)
class EbmConfig:
    rounds: int = 500
    learning_rate: float = 0.1
    max_bins: int = 32
    max_bins_int: int = 8  # interaction shapes see far fewer rows per bin
    inner_bags: int = 8
    fit_interactions: bool = True


@dataclass
class EbmModel:
    intercept: float
    features: list[str]
    f_com: list[ShapeFunction]
    f_int: list[ShapeFunction]
    config: EbmConfig
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    def _check_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.features):
            raise ValueError(f"expected {len(self.features)} feature columns, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("missing feature value in prediction input")
        return X

    def predict_logit(self, X: np.ndarray, periods: np.ndarray | int) -> np.ndarray:
        """Exact additive score: intercept + common shapes + gated interaction shapes."""
        X = self._check_matrix(X)
        delta = np.broadcast_to(np.asarray(periods, dtype=float), X.shape[0])
        out = np.full(X.shape[0], self.intercept)
        for j in range(len(self.features)):
            out = out + self.f_com[j].lookup(X[:, j])
            out = out + delta * self.f_int[j].lookup(X[:, j])
        return out

    def predict_proba(self, X: np.ndarray, periods: np.ndarray | int) -> np.ndarray:
        return expit(self.predict_logit(X, periods))


def _logistic_loss_sum(F: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, F) - y * F))


def fit_ebm(
    X: np.ndarray,
    y: np.ndarray,
    periods: np.ndarray,
    features: list[str],
    config: EbmConfig = EbmConfig(),
    seed=0,
) -> EbmModel:
    """Fit the additive model by cyclic boosting.

    The intercept starts at the base-rate log-odds. Each round updates every
    common shape then, when interactions are enabled, every interaction shape
    on second-period rows. Shapes are mean-centered afterwards (interactions
    over second-period rows) with the removed mass folded into the intercept.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    periods = np.asarray(periods, dtype=int)
    n, k = X.shape
    if k != len(features):
        raise ValueError(f"{k} columns for {len(features)} feature names")
    pos = float(np.mean(y))
    if pos in (0.0, 1.0):
        raise SingleClassError("training data must contain both classes")
    rows2 = np.where(periods == 1)[0]
    if config.fit_interactions and not (2 <= len(rows2) <= n - 2):
        raise ValueError("need at least 2 rows in each period to fit interactions")

    rng = np.random.default_rng(seed)
    bins = [bin_feature(X[:, j], config.max_bins, feature=features[j]) for j in range(k)]
    int_bins = [bin_feature(X[:, j], config.max_bins_int, feature=features[j]) for j in range(k)]
    bin_idx = [bins[j].assign(X[:, j]) for j in range(k)]
    com_vals = [np.zeros(bins[j].n_bins) for j in range(k)]
    int_vals = [np.zeros(int_bins[j].n_bins) for j in range(k)]

    intercept = float(np.log(pos / (1.0 - pos)))
    F = np.full(n, intercept)
    all_rows = np.arange(n)
    lr = config.learning_rate

    def update_term(
        vals: np.ndarray,
        rows: np.ndarray,
        idx_rows: np.ndarray,
        n_bins: int,
        center_weights: np.ndarray | None = None,
    ):
        m = len(rows)
        p = expit(F[rows])
        r = y[rows] - p
        acc = np.zeros(n_bins)
        for _ in range(config.inner_bags):
            take = rng.integers(0, m, m)
            tb = idx_rows[take]
            sums = np.bincount(tb, weights=r[take], minlength=n_bins)
            cnts = np.bincount(tb, minlength=n_bins)
            acc += np.where(cnts > 0, sums / np.maximum(cnts, 1), 0.0)
        u = lr * acc / config.inner_bags
        if center_weights is not None:
            # projected update: the model has no period main effect, so an
            # interaction update may not carry a second-period offset
            u = u - float(center_weights @ u)
        f_old = F[rows]
        f_new = f_old + u[idx_rows]
        # descent guard: bagged updates are noisy near convergence
        if _logistic_loss_sum(f_new, y[rows]) <= _logistic_loss_sum(f_old, y[rows]):
            F[rows] = f_new
            vals += u

    int_idx = [int_bins[j].assign(X[rows2, j]) for j in range(k)]
    int_weights = [
        np.bincount(int_idx[j], minlength=int_bins[j].n_bins) / max(len(rows2), 1)
        for j in range(k)
    ]
    loss_history = []
    for _ in range(config.rounds):
        for j in range(k):
            update_term(com_vals[j], all_rows, bin_idx[j], bins[j].n_bins)
        if config.fit_interactions:
            for j in range(k):
                update_term(int_vals[j], rows2, int_idx[j], int_bins[j].n_bins,
                            center_weights=int_weights[j])
        loss_history.append(_logistic_loss_sum(F, y) / n)

    # center shapes over their training distributions, fold mass into intercept
    for j in range(k):
        w = np.bincount(bin_idx[j], minlength=bins[j].n_bins) / n
        mu = float(w @ com_vals[j])
        com_vals[j] -= mu
        intercept += mu
        if config.fit_interactions and len(rows2):
            w2 = np.bincount(int_idx[j], minlength=int_bins[j].n_bins) / len(rows2)
            mu2 = float(w2 @ int_vals[j])
            int_vals[j] -= mu2
            intercept += mu2

    return EbmModel(
        intercept=intercept,
        features=list(features),
        f_com=[ShapeFunction(features[j], bins[j], com_vals[j]) for j in range(k)],
        f_int=[ShapeFunction(features[j], int_bins[j], int_vals[j]) for j in range(k)],
        config=config,
        seed=seed if isinstance(seed, int) else 0,
        loss_history=loss_history,
    )


def rank_auc(scores: np.ndarray, y: np.ndarray) -> float | None:
    """AUC by the midrank statistic; tied scores contribute one half."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=int)
    npos = int(np.sum(y == 1))
    nneg = int(np.sum(y == 0))
    if npos == 0 or nneg == 0:
        return None
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    midranks = starts + (counts + 1) / 2.0  # 1-based average ranks
    ranks = midranks[inverse]
    return float((np.sum(ranks[y == 1]) - npos * (npos + 1) / 2.0) / (npos * nneg))


def evaluate(model: EbmModel, X: np.ndarray, y: np.ndarray, periods: np.ndarray) -> dict:
    """Accuracy at the 0.5 threshold and midrank AUC on held-out rows."""
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ValueError("empty test set")
    proba = model.predict_proba(X, periods)
    accuracy = float(np.mean((proba >= 0.5).astype(int) == y))
    return {"accuracy": accuracy, "auc": rank_auc(proba, y), "n": int(len(y))}


@dataclass
class EnsembleFit:
    features: list[str]
    grids: dict[str, np.ndarray]        # 64 evenly spaced points per feature
    com_curves: dict[str, np.ndarray]   # (n_repeats, grid) per feature
    total_curves: dict[str, np.ndarray]
    metrics: list[dict | None]          # per-repeat held-out metrics
    n_repeats: int
    n_per_period: int
    degraded: bool = False              # a period had too few rows to subsample

    def mean_curve(self, feature: str, which: str = "com") -> np.ndarray:
        return np.mean(self._curves(which)[feature], axis=0)

    def band(self, feature: str, which: str = "com") -> tuple[np.ndarray, np.ndarray]:
        curves = self._curves(which)[feature]
        return (
            np.percentile(curves, 2.5, axis=0),
            np.percentile(curves, 97.5, axis=0),
        )

    def _curves(self, which: str) -> dict[str, np.ndarray]:
        if which == "com":
            return self.com_curves
        if which == "total":
            return self.total_curves
        raise ValueError(f"unknown curve kind {which!r}")


def fit_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    periods: np.ndarray,
    features: list[str],
    config: EbmConfig = EbmConfig(),
    n_repeats: int = 100,
    n_per_period: int = 90,
    grid_points: int = 64,
    seed=0,
) -> EnsembleFit:
    """Repeatedly fit on per-period subsamples; held-out rows form the test set.

    Each repeat draws ``n_per_period`` rows without replacement from each
    period for training. A period without enough rows contributes all of its
    rows and flags the fit as degraded; with both periods exhausted the test
    set is empty and that repeat's metrics are None.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    periods = np.asarray(periods, dtype=int)
    n = len(y)
    grids = {
        f: np.linspace(np.min(X[:, j]), np.max(X[:, j]), grid_points)
        for j, f in enumerate(features)
    }
    idx_by_period = [np.where(periods == p)[0] for p in (0, 1)]
    degraded = any(len(idx) <= n_per_period for idx in idx_by_period)

    com_curves = {f: np.empty((n_repeats, grid_points)) for f in features}
    total_curves = {f: np.empty((n_repeats, grid_points)) for f in features}
    metrics: list[dict | None] = []
    for rep in range(n_repeats):
        split_child, fit_child = np.random.SeedSequence([_seed_entropy(seed), rep]).spawn(2)
        rng = np.random.default_rng(split_child)
        train_parts = []
        for idx in idx_by_period:
            if len(idx) > n_per_period:
                train_parts.append(rng.choice(idx, n_per_period, replace=False))
            else:
                train_parts.append(idx)
        train = np.concatenate(train_parts)
        test = np.setdiff1d(np.arange(n), train)
        model = fit_ebm(X[train], y[train], periods[train], features, config, seed=fit_child)
        metrics.append(
            evaluate(model, X[test], y[test], periods[test]) if len(test) else None
        )
        for j, f in enumerate(features):
            com = model.f_com[j].lookup(grids[f])
            com_curves[f][rep] = com
            total_curves[f][rep] = com + model.f_int[j].lookup(grids[f])

    return EnsembleFit(
        features=list(features),
        grids=grids,
        com_curves=com_curves,
        total_curves=total_curves,
        metrics=metrics,
        n_repeats=n_repeats,
        n_per_period=n_per_period,
        degraded=degraded,
    )


def _seed_entropy(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, dtype=np.uint64)[0])
    raise TypeError(f"unsupported seed type {type(seed)!r}")


# --- JSON serialization (exact round trip at full float precision) -----------

def model_to_dict(model: EbmModel) -> dict:
    return {
        "version": SERIALIZATION_VERSION,
        "intercept": model.intercept,
        "features": model.features,
        "shapes": {
            f: {
                "com_cuts": model.f_com[j].bins.cuts.tolist(),
                "com_values": model.f_com[j].values.tolist(),
                "int_cuts": model.f_int[j].bins.cuts.tolist(),
                "int_values": model.f_int[j].values.tolist(),
            }
            for j, f in enumerate(model.features)
        },
        "config": asdict(model.config),
        "seed": model.seed,
    }


def model_from_dict(data: dict) -> EbmModel:
    if data.get("version") != SERIALIZATION_VERSION:
        raise ValueError(f"unsupported model version {data.get('version')!r}")
    features = list(data["features"])
    f_com, f_int = [], []
    for f in features:
        entry = data["shapes"][f]
        com_bins = BinSpec(feature=f, cuts=np.asarray(entry["com_cuts"], dtype=float))
        int_bins = BinSpec(feature=f, cuts=np.asarray(entry["int_cuts"], dtype=float))
        f_com.append(ShapeFunction(f, com_bins, np.asarray(entry["com_values"], dtype=float)))
        f_int.append(ShapeFunction(f, int_bins, np.asarray(entry["int_values"], dtype=float)))
    return EbmModel(
        intercept=float(data["intercept"]),
        features=features,
        f_com=f_com,
        f_int=f_int,
        config=EbmConfig(**data["config"]),
        seed=int(data.get("seed", 0)),
    )


def model_to_json(model: EbmModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=2) + "\n"


def model_from_json(text: str) -> EbmModel:
    return model_from_dict(json.loads(text))
