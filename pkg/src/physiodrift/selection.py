"""Greedy forward feature selection wrapped around the additive model.

Candidates are scored by stratified k-fold cross-validated accuracy of an
interaction-free model on the current set plus the candidate; the best mean
accuracy wins, ties broken by canonical feature-table order. Selection is
global: it sees all participants and both periods at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ebm import EbmConfig, SingleClassError, evaluate, fit_ebm
from .tables import FEATURE_NAMES, FeatureTable

# reduced boosting budget: the wrapper refits hundreds of times
WRAPPER_EBM = EbmConfig(
    rounds=60, learning_rate=0.2, max_bins=16, inner_bags=1, fit_interactions=False
)


@dataclass(frozen=True)
class SelectionSettings:
    k: int = 5
    folds: int = 5
    wrapper: EbmConfig = WRAPPER_EBM


@dataclass
class SelectionResult:
    selected: list[str]
    trajectory: list[tuple[str, float]]  # (feature added, CV accuracy at that step)
    k: int
    folds: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "trajectory": [{"feature": f, "cv_accuracy": s} for f, s in self.trajectory],
            "config": {"k": self.k, "folds": self.folds, "seed": self.seed},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin."""
    y = np.asarray(y, dtype=int)
    assignment = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.where(y == cls)[0]
        idx = rng.permutation(idx)
        assignment[idx] = np.arange(len(idx)) % folds
    return assignment


def _cv_accuracy(
    X: np.ndarray,
    y: np.ndarray,
    feature_set: list[str],
    folds: int,
    wrapper: EbmConfig,
    seed_entropy: list[int],
) -> float:
    fold_rng = np.random.default_rng(np.random.SeedSequence(seed_entropy))
    fold_of = stratified_folds(y, folds, fold_rng)
    accs = []
    zeros = np.zeros(len(y), dtype=int)
    for f in range(folds):
        test = fold_of == f
        train = ~test
        if len(np.unique(y[train])) < 2 or not np.any(test):
            continue
        model = fit_ebm(
            X[train], y[train], zeros[train], feature_set, wrapper,
            seed=np.random.SeedSequence(seed_entropy + [f]),
        )
        accs.append(evaluate(model, X[test], y[test], zeros[test])["accuracy"])
    if not accs:
        raise SingleClassError("no fold had both classes in training")
    return float(np.mean(accs))


def sequential_forward_select(
    table: FeatureTable,
    k: int = 5,
    folds: int = 5,
    seed: int = 0,
    features: list[str] | None = None,
    wrapper: EbmConfig = WRAPPER_EBM,
) -> SelectionResult:
    """Greedy forward selection of ``k`` features against the binary label.

    Rows missing the candidate (or any already-selected feature) are dropped
    per candidate evaluation. Deterministic for a fixed table and seed.
    """
    candidates = [f for f in (features if features is not None else FEATURE_NAMES)
                  if f in table.values]
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds the {len(candidates)} candidate features")
    if len(np.unique(table.labels)) < 2:
        raise SingleClassError("selection needs both label classes")

    selected: list[str] = []
    trajectory: list[tuple[str, float]] = []
    remaining = list(candidates)
    for step in range(k):
        best_feature, best_score = None, -np.inf
        for cand in remaining:  # canonical order; strict > keeps first on ties
            feature_set = selected + [cand]
            mask = table.complete_rows(feature_set)
            sub = table.subset(mask)
            if len(sub) == 0 or len(np.unique(sub.labels)) < 2:
                continue
            score = _cv_accuracy(
                sub.matrix(feature_set), sub.labels, feature_set, folds, wrapper,
                seed_entropy=[seed, step, candidates.index(cand)],
            )
            if score > best_score:
                best_feature, best_score = cand, score
        if best_feature is None:
            raise SingleClassError("no candidate produced a scorable split")
        selected.append(best_feature)
        remaining.remove(best_feature)
        trajectory.append((best_feature, best_score))
    return SelectionResult(selected=selected, trajectory=trajectory, k=k, folds=folds, seed=seed)
