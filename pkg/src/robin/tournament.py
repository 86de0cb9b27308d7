"""Pairwise-comparison tournaments ranked by Bradley-Terry-Luce strengths.

Scheduling is a full round robin for small fields and uniform sampling
without replacement above the round-robin limit. Verdicts come from an
LLM judge through the gateway; strengths are estimated with a
minorize-maximize fixed point on the smoothed win counts, which makes
the likelihood nondecreasing sweep over sweep and keeps the MLE finite
and connected for any record set when the smoothing weight is positive.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gateway import AgentRequest, Exhausted, Gateway, Role
from .model import ComparisonRecord, Hypothesis
from .parsers import ParseError, parse_judge_verdict
from .prompts import PromptTemplate, render

logger = logging.getLogger(__name__)

TIE_EPSILON = 1e-9
DROP_TOLERANCE = 0.2


class TooFewItems(ValueError):
    pass


class NoRecords(ValueError):
    pass


class Disconnected(ValueError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        super().__init__(
            f"comparison graph has {len(components)} components and no smoothing"
        )


class Unconverged(RuntimeError):
    pass


class MismatchedIds(ValueError):
    pass


class Empty(ValueError):
    pass


class TournamentDegraded(RuntimeError):
    def __init__(self, dropped: int, total: int):
        self.dropped = dropped
        self.total = total
        super().__init__(f"{dropped}/{total} comparisons dropped (> {DROP_TOLERANCE:.0%})")


class ScheduleMode(str, enum.Enum):
    ROUND_ROBIN = "round_robin"
    SAMPLED_CAP = "sampled_cap"


@dataclass(frozen=True)
class ComparisonSchedule:
    pairs: tuple[tuple[int, int], ...]  # presentation order per pair
    mode: ScheduleMode
    seed: int

    def unordered(self) -> set[frozenset[int]]:
        return {frozenset(p) for p in self.pairs}


def schedule(n: int, round_robin_limit: int, cap: int, seed: int) -> ComparisonSchedule:
    """All pairs when the field fits the round-robin limit, else a uniform
    sample of ``cap`` distinct pairs; presentation order randomized."""
    if n < 2:
        raise TooFewItems(f"cannot schedule comparisons for {n} item(s)")
    rng = random.Random(seed)
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if n <= round_robin_limit:
        mode = ScheduleMode.ROUND_ROBIN
        chosen = all_pairs
    else:
        mode = ScheduleMode.SAMPLED_CAP
        k = min(cap, len(all_pairs))
        chosen = sorted(rng.sample(all_pairs, k))
    presented = tuple(
        (j, i) if rng.random() < 0.5 else (i, j) for i, j in chosen
    )
    return ComparisonSchedule(pairs=presented, mode=mode, seed=seed)


def _present_item(position: int, item: Hypothesis) -> str:
    report_text = item.report.raw_text if item.report else ""
    body = "\n".join(f"{k}: {v}" for k, v in item.body.items())
    return (
        f"--- Candidate {position} ---\n"
        f"Name: {item.name} (ID: {item.id})\n{body}\n{report_text}"
    )


def _judge_pair(
    pair: tuple[int, int],
    items: dict[int, Hypothesis],
    template: PromptTemplate,
    vars: dict,
    gateway: Gateway,
    judge_label: str,
) -> Optional[ComparisonRecord]:
    first, second = pair
    rendered = render(template, vars)
    user = (
        rendered.user_text
        + "\n\n"
        + _present_item(1, items[first])
        + "\n\n"
        + _present_item(2, items[second])
    )
    lo, hi = min(pair), max(pair)
    request = AgentRequest(
        role=Role.JUDGE,
        system=rendered.system_text,
        user=user,
        tag=f"pair-{lo}-{hi}",
    )
    unordered = frozenset(pair)
    for attempt in range(2):  # one retry on an unparseable verdict
        try:
            response = gateway.complete(request)
        except Exhausted as exc:
            logger.warning("pair %s dropped: %s", pair, exc)
            return None
        try:
            outcome = parse_judge_verdict(response.text, unordered)
        except ParseError as exc:
            if attempt == 0:
                logger.warning("pair %s verdict unparseable, retrying: %s", pair, exc)
                continue
            logger.warning("pair %s dropped after retry: %s", pair, exc)
            return None
        verdict = outcome.value
        return ComparisonRecord(
            pair=unordered,
            winner_id=verdict.winner[1],
            loser_id=verdict.loser[1],
            presentation_order=pair,
            judge_label=judge_label,
            verdict_digest=hashlib.sha256(response.text.encode("utf-8")).hexdigest(),
        )
    return None


def adjudicate(
    comparison_schedule: ComparisonSchedule,
    items: dict[int, Hypothesis],
    judge_template: PromptTemplate,
    gateway: Gateway,
    vars: Optional[dict] = None,
    judge_label: str = "judge",
) -> list[ComparisonRecord]:
    """One adjudicated record per scheduled pair, fanned out concurrently.

    Pairs whose verdicts stay unparseable after one retry are dropped;
    the tournament aborts only when more than 20% of pairs drop.
    """
    vars = vars or {}
    pairs = comparison_schedule.pairs
    with ThreadPoolExecutor(max_workers=gateway.policy.concurrency_limit) as pool:
        results = list(
            pool.map(
                lambda p: _judge_pair(p, items, judge_template, vars, gateway, judge_label),
                pairs,
            )
        )
    records = [r for r in results if r is not None]
    dropped = len(pairs) - len(records)
    if dropped > DROP_TOLERANCE * len(pairs):
        raise TournamentDegraded(dropped, len(pairs))
    return records


@dataclass
class BtlFit:
    strengths: np.ndarray  # positive, sums to 1
    iterations: int
    converged: bool
    log_likelihood: float
    smoothing_alpha: float
    log_likelihood_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strengths": [float(s) for s in self.strengths],
            "iterations": self.iterations,
            "converged": self.converged,
            "log_likelihood": self.log_likelihood,
            "smoothing_alpha": self.smoothing_alpha,
        }


def _win_matrix(records: Sequence[ComparisonRecord], n_items: int) -> np.ndarray:
    wins = np.zeros((n_items, n_items))
    for record in records:
        if not (0 <= record.winner_id < n_items and 0 <= record.loser_id < n_items):
            raise ValueError(f"record references id outside 0..{n_items - 1}")
        wins[record.winner_id, record.loser_id] += 1
    return wins


def _scheduled_matrix(
    n_items: int, scheduled_pairs: Optional[Sequence[tuple[int, int]]]
) -> np.ndarray:
    if scheduled_pairs is None:
        adj = np.ones((n_items, n_items)) - np.eye(n_items)
    else:
        adj = np.zeros((n_items, n_items))
        for i, j in scheduled_pairs:
            adj[i, j] = adj[j, i] = 1.0
    return adj


def _connected_components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen: set[int] = set()
    components = []
    for start in range(n):
        if start in seen:
            continue
        stack, comp = [start], []
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            comp.append(node)
            stack.extend(int(m) for m in np.nonzero(adj[node])[0] if m not in seen)
        components.append(sorted(comp))
    return components


def btl_log_likelihood(
    strengths: np.ndarray,
    records: Sequence[ComparisonRecord],
    smoothing_alpha: float = 0.0,
    n_items: Optional[int] = None,
    scheduled_pairs: Optional[Sequence[tuple[int, int]]] = None,
) -> float:
    """Smoothed log-likelihood: observed wins plus ``alpha`` virtual wins
    in each direction per scheduled pair."""
    n = n_items if n_items is not None else len(strengths)
    wins = _win_matrix(records, n)
    if smoothing_alpha > 0:
        wins = wins + smoothing_alpha * _scheduled_matrix(n, scheduled_pairs)
    s = np.asarray(strengths, dtype=float)
    total = s[:, None] + s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(s[:, None]) - np.log(total)
    mask = wins > 0
    return float(np.sum(wins[mask] * logp[mask]))


def fit_btl(
    records: Sequence[ComparisonRecord],
    n_items: int,
    smoothing_alpha: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10000,
    scheduled_pairs: Optional[Sequence[tuple[int, int]]] = None,
) -> BtlFit:
    """Minorize-maximize fixed point for BTL strengths.

    Sweep update: s_i <- (w_i + alpha*d_i) / sum_{j != i} (n_ij + 2*alpha*a_ij)/(s_i + s_j),
    renormalized to the 1-simplex; stops when the max relative strength
    change drops below ``tol``.
    """
    if n_items < 2:
        raise TooFewItems(f"need at least 2 items, got {n_items}")
    if not records:
        raise NoRecords("no comparison records")
    wins = _win_matrix(records, n_items)
    adjacency = _scheduled_matrix(n_items, scheduled_pairs)
    if smoothing_alpha == 0:
        observed = ((wins + wins.T) > 0).astype(float)
        components = _connected_components(observed)
        if len(components) > 1:
            raise Disconnected(components)
    effective_wins = wins + smoothing_alpha * adjacency
    pair_counts = wins + wins.T + 2 * smoothing_alpha * adjacency
    win_totals = effective_wins.sum(axis=1)

    s = np.full(n_items, 1.0 / n_items)
    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        totals = s[:, None] + s[None, :]
        np.fill_diagonal(totals, 1.0)  # diagonal never contributes
        denom = (pair_counts / totals).sum(axis=1)
        s_new = np.where(denom > 0, win_totals / np.maximum(denom, 1e-300), s)
        s_new = np.maximum(s_new, 1e-300)
        s_new /= s_new.sum()
        history.append(
            btl_log_likelihood(
                s_new, records, smoothing_alpha, n_items, scheduled_pairs
            )
        )
        delta = np.max(np.abs(s_new - s) / np.maximum(s, 1e-300))
        s = s_new
        if delta < tol:
            converged = True
            break
    return BtlFit(
        strengths=s,
        iterations=iterations,
        converged=converged,
        log_likelihood=history[-1],
        smoothing_alpha=smoothing_alpha,
        log_likelihood_history=history,
    )


@dataclass
class Ranking:
    entries: list[tuple[int, float]]  # (hypothesis_id, strength), nonincreasing
    tie_note: list[list[int]] = field(default_factory=list)

    def ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    def top(self, k: int) -> list[int]:
        return self.ids()[:k]

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"hypothesis_id": i, "strength": float(s)} for i, s in self.entries
            ],
            "tie_note": [list(group) for group in self.tie_note],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Ranking":
        return cls(
            entries=[
                (e["hypothesis_id"], e["strength"]) for e in data["entries"]
            ],
            tie_note=[list(g) for g in data.get("tie_note", [])],
        )


def rank(fit: BtlFit, allow_unconverged: bool = False) -> Ranking:
    """Sort ids by strength descending; near-equal strengths tie-break by
    ascending id and are reported in tie_note."""
    if not fit.converged and not allow_unconverged:
        raise Unconverged("fit did not converge; pass allow_unconverged to rank anyway")
    order = sorted(range(len(fit.strengths)), key=lambda i: (-fit.strengths[i], i))
    entries = [(i, float(fit.strengths[i])) for i in order]
    tie_note: list[list[int]] = []
    group = [order[0]]
    for prev, cur in zip(order, order[1:]):
        if abs(fit.strengths[prev] - fit.strengths[cur]) < TIE_EPSILON:
            group.append(cur)
        else:
            if len(group) > 1:
                tie_note.append(sorted(group))
            group = [cur]
    if len(group) > 1:
        tie_note.append(sorted(group))
    return Ranking(entries=entries, tie_note=tie_note)


def topk_overlap(r1: Ranking, r2: Ranking, k: int) -> int:
    if set(r1.ids()) != set(r2.ids()):
        raise MismatchedIds("rankings cover different id sets")
    if k > len(r1.ids()):
        raise ValueError("k exceeds the number of ranked items")
    return len(set(r1.top(k)) & set(r2.top(k)))


def consistency_rate(
    repeats: Sequence[tuple[frozenset[int], int, int]]
) -> float:
    """Fraction of repeated comparisons where both verdicts agree on the winner."""
    if not repeats:
        raise Empty("no repeated comparisons")
    agreements = 0
    for pair, first_winner, second_winner in repeats:
        if first_winner not in pair or second_winner not in pair:
            raise ValueError("verdict winner outside its pair")
        if first_winner == second_winner:
            agreements += 1
    return agreements / len(repeats)
