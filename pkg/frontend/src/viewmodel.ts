/**
 * View models for the review screens. These are shape adapters only:
 * ranks, strengths, and support fractions arrive precomputed from the
 * server and are carried through verbatim — no client-side recomputation.
 */

import type {
  ComparisonRecord,
  ConsensusDoc,
  RankingDoc,
  RunSummary,
} from "./api.js";
import { gateBanner, gatesFor, type GateState } from "./gates.js";

export interface RankingRow {
  rank: number;
  hypothesisId: number;
  name: string;
  strength: number;
  tiedWith: number[];
}

export interface ComparisonRow {
  label: string;
  winnerId: number;
  loserId: number;
  judgeLabel: string;
}

export interface ConsensusRow {
  item: string;
  direction: string;
  supportFraction: number;
  flagged: boolean;
}

export interface RunView {
  runId: string;
  stage: string;
  iteration: number;
  diseaseName: string;
  banner: string;
  gates: GateState;
}

export function runView(summary: RunSummary): RunView {
  return {
    runId: summary.run_id,
    stage: summary.stage,
    iteration: summary.iteration,
    diseaseName: summary.disease_name,
    banner: gateBanner(summary),
    gates: gatesFor(summary),
  };
}

export function rankingRows(doc: RankingDoc): RankingRow[] {
  const ties = new Map<number, number[]>();
  for (const group of doc.ranking.tie_note) {
    for (const id of group) {
      ties.set(
        id,
        group.filter((other) => other !== id),
      );
    }
  }
  return doc.ranking.entries.map((entry, index) => ({
    rank: index + 1,
    hypothesisId: entry.hypothesis_id,
    name: doc.names[String(entry.hypothesis_id)] ?? "",
    strength: entry.strength,
    tiedWith: ties.get(entry.hypothesis_id) ?? [],
  }));
}

export function comparisonRows(records: ComparisonRecord[]): ComparisonRow[] {
  return records.map((record) => ({
    label: record.presentation_order.join(" vs "),
    winnerId: record.winner_id,
    loserId: record.loser_id,
    judgeLabel: record.judge_label,
  }));
}

export function consensusRows(doc: ConsensusDoc): ConsensusRow[] {
  const flagged = new Set(doc.flagged);
  return doc.items.map((item) => ({
    item: item.item,
    direction: item.direction,
    supportFraction: item.support_fraction,
    flagged: flagged.has(item.item),
  }));
}

/** Format a strength or fraction for display without rounding surprises. */
export function formatNumber(value: number, digits = 4): string {
  return value.toFixed(digits);
}
