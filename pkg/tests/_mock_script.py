"""Deterministic mock-script builder for full pipeline runs.

Produces one scripted response for every request the pipeline will make
for a given config: query generation, literature reviews, hypothesis
batches, per-item evaluation reports, every scheduled judge verdict
(the mock judge always prefers the lower id), trajectory findings, and
insight synthesis. Content depends only on the config, so runs replayed
from the same script are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from robin.model import RunConfig
from robin.orchestrator import derive_seed
from robin.parsers import (
    JudgeVerdict,
    emit_candidate_blocks,
    emit_judge_verdict,
    emit_query_list,
    emit_strategy_array,
)
from robin.tournament import schedule

ASSAY_SECTIONS = [
    "Assay Overview",
    "Biomedical Evidence",
    "Previous Use",
    "Overall Evaluation",
]
CANDIDATE_SECTIONS = [
    "Overview of Therapeutic Candidate",
    "Therapeutic History",
    "Mechanism of Action",
    "Expected Effect",
    "Overall Evaluation",
]


def _sectioned(titles: list[str], label: str) -> str:
    parts = [f"{title}: Synthetic notes about {label} regarding {title.lower()}."
             for title in titles]
    return "\n".join(parts)


def _judge_entries(pairs, names: dict[int, str], iteration_note: str) -> list[dict]:
    entries = []
    for i, j in sorted(frozenset(map(frozenset, pairs)), key=sorted):
        lo, hi = sorted((i, j))
        verdict = emit_judge_verdict(
            JudgeVerdict(
                analysis=f"Compared items {lo} and {hi} ({iteration_note}).",
                reasoning=f"Item {lo} is preferred by the scripted rule.",
                winner=(names[lo], lo),
                loser=(names[hi], hi),
            )
        )
        entries.append(
            {"role": "judge", "tag": f"pair-{lo}-{hi}", "responses": [verdict]}
        )
    return entries


def build_entries(config: RunConfig, iteration: int = 1) -> list[dict]:
    it = f"it{iteration}"
    entries: list[dict] = []

    # stage 1: assay queries (iteration 1 only)
    if iteration == 1:
        entries.append(
            {
                "role": "synthesizer",
                "tag": f"{it}:query-gen",
                "responses": [
                    emit_query_list(
                        [f"assay query {k} for {config.disease_name}"
                         for k in range(config.num_queries)]
                    )
                ],
            }
        )
        for k in range(config.num_queries):
            entries.append(
                {
                    "role": "concise_literature",
                    "tag": f"{it}:assay-lit-{k}",
                    "responses": [f"Literature digest {k}: synthetic evidence summary."],
                }
            )
        entries.append(
            {
                "role": "synthesizer",
                "tag": f"{it}:assay-hyp-gen",
                "responses": [
                    emit_strategy_array(
                        [
                            (f"Assay strategy {k}",
                             f"Rationale for strategy {k} grounded in the digests.")
                            for k in range(config.num_assays)
                        ]
                    )
                ],
            }
        )
        assay_names = {k: f"Assay strategy {k}" for k in range(config.num_assays)}
        for k in range(config.num_assays):
            entries.append(
                {
                    "role": "concise_literature",
                    "tag": f"{it}:assay-report-{k}",
                    "responses": [_sectioned(ASSAY_SECTIONS, assay_names[k])],
                }
            )
        assay_schedule = schedule(
            n=config.num_assays,
            round_robin_limit=config.round_robin_limit,
            cap=config.comparison_cap,
            seed=derive_seed(config.seed, iteration, "assay_tournament"),
        )
        entries.extend(_judge_entries(assay_schedule.pairs, assay_names, "assay round"))
        entries.append(
            {
                "role": "synthesizer",
                "tag": f"{it}:goal",
                "responses": [
                    f"Identify therapeutics for {config.disease_name} measurable by "
                    f"{assay_names[0]}."
                ],
            }
        )

    # candidate cycle
    n_cand_queries = 2 * config.num_queries
    entries.append(
        {
            "role": "synthesizer",
            "tag": f"{it}:cand-query-gen",
            "responses": [
                emit_query_list(
                    [f"candidate query {k} ({it})" for k in range(n_cand_queries)]
                )
            ],
        }
    )
    for k in range(n_cand_queries):
        entries.append(
            {
                "role": "concise_literature",
                "tag": f"{it}:cand-lit-{k}",
                "responses": [f"Candidate literature digest {k} ({it})."],
            }
        )
    entries.append(
        {
            "role": "synthesizer",
            "tag": f"{it}:cand-hyp-gen",
            "responses": [
                emit_candidate_blocks(
                    [
                        (
                            f"Compound {k} ({it})",
                            f"Compound {k} modulates the target pathway.",
                            f"Digest-backed rationale for compound {k}.",
                        )
                        for k in range(config.num_candidates)
                    ]
                )
            ],
        }
    )
    cand_names = {k: f"Compound {k} ({it})" for k in range(config.num_candidates)}
    for k in range(config.num_candidates):
        entries.append(
            {
                "role": "deep_literature",
                "tag": f"{it}:cand-report-{k}",
                "responses": [_sectioned(CANDIDATE_SECTIONS, cand_names[k])],
            }
        )
    cand_schedule = schedule(
        n=config.num_candidates,
        round_robin_limit=config.round_robin_limit,
        cap=config.comparison_cap,
        seed=derive_seed(config.seed, iteration, "candidate_tournament"),
    )
    entries.extend(_judge_entries(cand_schedule.pairs, cand_names, f"candidate {it}"))

    # post-gate analysis
    for tid in range(config.trajectory_count):
        findings = [
            {"item": "ABCA1", "direction": "up", "effect": 1.585,
             "significance": 2.13e-83},
            {"item": f"GENE{tid % 3}", "direction": "down", "effect": -0.4,
             "significance": 0.01},
        ]
        entries.append(
            {
                "role": "trajectory_analyst",
                "tag": f"trajectory-{tid}",
                "responses": [json.dumps(findings)],
            }
        )
    entries.append(
        {
            "role": "synthesizer",
            "tag": f"{it}:insight",
            "responses": [
                "Consistent ABCA1 upregulation suggests efflux-pathway engagement; "
                "follow up with a dose-response efflux assay."
            ],
        }
    )
    return entries


def write_script(path: str | Path, config: RunConfig, iterations: int = 1) -> Path:
    path = Path(path)
    entries: list[dict] = []
    for iteration in range(1, iterations + 1):
        entries.extend(build_entries(config, iteration))
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
    return path
