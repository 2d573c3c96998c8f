"""Uncertainty-aware bootstrap ranking of algorithms on class-level scores.

Class indices are resampled with replacement, with the SAME indices for every
algorithm (paired resampling), so algorithms are always compared on a common
bootstrap sample. Higher scores are better; ties share the average rank.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import AlgorithmSetMismatch, DataError, EmptyInput, LengthMismatch

DEFAULT_N_BOOT = 1000


@dataclass(frozen=True)
class AlgorithmScores:
    """Per-class hierarchically aggregated values for one algorithm on one dataset."""

    algorithm: str
    dataset: str
    class_values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_values",
                           tuple(float(v) for v in self.class_values))
        if not self.class_values:
            raise EmptyInput(f"{self.algorithm}: no class values")
        if any(not 0.0 <= v <= 1.0 for v in self.class_values):
            raise DataError(f"{self.algorithm}: class values outside [0, 1]")


@dataclass(frozen=True)
class DatasetRanking:
    """Bootstrap rank distribution of all algorithms on one dataset."""

    dataset: str
    algorithms: tuple[str, ...]
    rank_values: tuple[float, ...]  # observed ranks (half-integers under ties)
    frequencies: np.ndarray  # algorithms x rank_values, rows sum to 1
    mean_ranks: tuple[float, ...]
    n_boot: int
    seed: int

    def frequency(self, algorithm: str, rank: float) -> float:
        i = self.algorithms.index(algorithm)
        try:
            j = self.rank_values.index(rank)
        except ValueError:
            return 0.0
        return float(self.frequencies[i, j])

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "algorithms": list(self.algorithms),
            "rank_values": list(self.rank_values),
            "frequencies": [[float(f) for f in row] for row in self.frequencies],
            "mean_ranks": list(self.mean_ranks),
            "n_boot": self.n_boot,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RankingReport:
    """Per-dataset rankings plus the overall mean-of-mean-ranks order."""

    per_dataset: tuple[DatasetRanking, ...]
    overall_scores: Mapping[str, float]  # algorithm -> mean of mean ranks
    overall_order: tuple[str, ...]  # ascending score = best first

    def to_dict(self) -> dict:
        return {
            "per_dataset": [d.to_dict() for d in self.per_dataset],
            "overall_scores": {a: float(v) for a, v in sorted(self.overall_scores.items())},
            "overall_order": list(self.overall_order),
        }

    def to_bubble_csv(self, path: str | Path) -> None:
        """Bubble-plot data: one row per (dataset, algorithm, rank, frequency)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "algorithm", "rank", "frequency"])
            for d in self.per_dataset:
                for i, alg in enumerate(d.algorithms):
                    for j, rank in enumerate(d.rank_values):
                        freq = float(d.frequencies[i, j])
                        if freq > 0.0:
                            writer.writerow([d.dataset, alg, repr(rank), repr(freq)])


def bootstrap_rank(
    scores: Sequence[AlgorithmScores],
    n_boot: int = DEFAULT_N_BOOT,
    seed: int = 0,
) -> DatasetRanking:
    """Rank algorithms on one dataset across bootstrap resamples of classes.

    Per iteration: draw class indices with replacement (shared by all
    algorithms), average each algorithm's sampled values, rank the averages
    descending (rank 1 = best, ties averaged), and accumulate frequencies.
    """
    if len(scores) < 2:
        raise DataError("ranking needs at least two algorithms")
    datasets = {s.dataset for s in scores}
    if len(datasets) > 1:
        raise DataError(f"scores span several datasets: {sorted(datasets)}")
    k = len(scores[0].class_values)
    for s in scores[1:]:
        if len(s.class_values) != k:
            raise LengthMismatch(
                f"{s.algorithm} has {len(s.class_values)} class values, expected {k}"
            )
    names = [s.algorithm for s in scores]
    if len(set(names)) != len(names):
        raise DataError("algorithm names must be unique")

    values = np.array([s.class_values for s in scores])  # (A, K)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    idx = rng.integers(k, size=(n_boot, k))
    sampled_means = values[:, idx].mean(axis=2)  # (A, n_boot)
    ranks = stats.rankdata(-sampled_means, axis=0, method="average")  # (A, n_boot)

    rank_values = tuple(float(v) for v in np.unique(ranks))
    freq = np.zeros((len(scores), len(rank_values)))
    for j, rv in enumerate(rank_values):
        freq[:, j] = (ranks == rv).sum(axis=1) / n_boot
    return DatasetRanking(
        dataset=scores[0].dataset,
        algorithms=tuple(names),
        rank_values=rank_values,
        frequencies=freq,
        mean_ranks=tuple(float(m) for m in ranks.mean(axis=1)),
        n_boot=n_boot,
        seed=seed,
    )


def overall_ranking(per_dataset: Sequence[DatasetRanking]) -> RankingReport:
    """Overall score per algorithm = mean of its per-dataset mean ranks."""
    if not per_dataset:
        raise EmptyInput("no dataset rankings")
    algs = set(per_dataset[0].algorithms)
    for d in per_dataset[1:]:
        if set(d.algorithms) != algs:
            raise AlgorithmSetMismatch(
                f"{d.dataset} ranks {sorted(set(d.algorithms))}, "
                f"expected {sorted(algs)}"
            )
    sums: dict[str, float] = {a: 0.0 for a in algs}
    for d in per_dataset:
        for alg, mean_rank in zip(d.algorithms, d.mean_ranks):
            sums[alg] += mean_rank
    overall = {a: sums[a] / len(per_dataset) for a in algs}
    order = tuple(sorted(overall, key=lambda a: (overall[a], a)))
    return RankingReport(per_dataset=tuple(per_dataset),
                         overall_scores=overall, overall_order=order)
