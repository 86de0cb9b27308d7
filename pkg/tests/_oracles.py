"""Independent oracles used to validate derived quantities.

The BTL oracle maximizes the smoothed Bradley-Terry log-likelihood by
coarse-to-fine grid search over log-strengths (item 0 pinned at 0),
sharing no code or algorithm with the library's minorize-maximize
fit. The overlap oracle estimates the expected top-k overlap of two
independent uniformly random rankings by direct Monte Carlo.
"""

from __future__ import annotations

import itertools
import random

import numpy as np


def _weighted_wins(records, n, alpha, scheduled_pairs):
    wins = np.zeros((n, n))
    for record in records:
        wins[record.winner_id, record.loser_id] += 1
    if alpha > 0:
        if scheduled_pairs is None:
            adj = np.ones((n, n)) - np.eye(n)
        else:
            adj = np.zeros((n, n))
            for i, j in scheduled_pairs:
                adj[i, j] = adj[j, i] = 1.0
        wins = wins + alpha * adj
    return wins


def grid_btl(records, n, alpha=0.5, scheduled_pairs=None, log_tol=1e-5):
    """Maximize the smoothed BTL log-likelihood over log-strengths by
    iteratively refined full grid search; returns normalized strengths."""
    wins = _weighted_wins(records, n, alpha, scheduled_pairs)
    played = wins + wins.T > 0
    ii, jj = np.nonzero(played)

    def loglik(batch_u: np.ndarray) -> np.ndarray:
        # batch_u: (m, n) log-strengths; returns (m,) log-likelihoods
        s = np.exp(batch_u)
        total = s[:, ii] + s[:, jj]
        logp = batch_u[:, ii] - np.log(total)
        return (wins[ii, jj][None, :] * logp).sum(axis=1)

    free = n - 1
    center = np.zeros(free)
    half_width = 6.0
    points_per_axis = 7
    while half_width > log_tol:
        axes = [
            center[d] + np.linspace(-half_width, half_width, points_per_axis)
            for d in range(free)
        ]
        grid = np.array(list(itertools.product(*axes)))
        batch = np.concatenate([np.zeros((len(grid), 1)), grid], axis=1)
        best = int(np.argmax(loglik(batch)))
        center = grid[best]
        # the optimum lies within one grid step of the best point
        half_width = 2 * (2 * half_width / (points_per_axis - 1))
    u = np.concatenate([[0.0], center])
    s = np.exp(u)
    return s / s.sum()


def mc_topk_overlap(n: int, k: int, draws: int, seed: int = 0) -> float:
    """Monte-Carlo estimate of E|top-k(A) ∩ top-k(B)| for two independent
    uniformly random orderings of n items."""
    rng = random.Random(seed)
    items = list(range(n))
    total = 0
    for _ in range(draws):
        a = set(rng.sample(items, k))
        b = set(rng.sample(items, k))
        total += len(a & b)
    return total / draws
