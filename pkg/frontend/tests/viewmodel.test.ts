import { describe, expect, it } from "vitest";
import type {
  ComparisonRecord,
  ConsensusDoc,
  RankingDoc,
  RunSummary,
} from "../src/api.js";
import {
  comparisonRows,
  consensusRows,
  formatNumber,
  rankingRows,
  runView,
} from "../src/viewmodel.js";

const RANKING: RankingDoc = {
  iteration: 1,
  ranking: {
    entries: [
      { hypothesis_id: 2, strength: 0.41 },
      { hypothesis_id: 0, strength: 0.31 },
      { hypothesis_id: 1, strength: 0.28 },
    ],
    tie_note: [[0, 1]],
  },
  names: { "0": "Compound 1", "1": "Compound 2", "2": "Compound 3" },
};

const CONSENSUS: ConsensusDoc = {
  items: [
    { item: "ABCA1", direction: "up", support_fraction: 0.625, counts: { up: 5 } },
    { item: "GENE_B", direction: "down", support_fraction: 0.5, counts: { down: 4 } },
  ],
  threshold: 0.5,
  flagged: ["ABCA1"],
  n_trajectories_used: 8,
  warnings: [],
};

describe("rankingRows", () => {
  it("keeps server order and strengths verbatim", () => {
    const rows = rankingRows(RANKING);
    expect(rows.map((r) => r.hypothesisId)).toEqual([2, 0, 1]);
    expect(rows.map((r) => r.rank)).toEqual([1, 2, 3]);
    expect(rows.map((r) => r.strength)).toEqual([0.41, 0.31, 0.28]);
  });

  it("resolves names by id and defaults to empty", () => {
    const rows = rankingRows({ ...RANKING, names: { "2": "Compound 3" } });
    expect(rows[0].name).toBe("Compound 3");
    expect(rows[1].name).toBe("");
  });

  it("attaches tie partners from tie_note", () => {
    const rows = rankingRows(RANKING);
    expect(rows.find((r) => r.hypothesisId === 0)?.tiedWith).toEqual([1]);
    expect(rows.find((r) => r.hypothesisId === 1)?.tiedWith).toEqual([0]);
    expect(rows.find((r) => r.hypothesisId === 2)?.tiedWith).toEqual([]);
  });
});

describe("comparisonRows", () => {
  it("labels pairs by presentation order", () => {
    const record: ComparisonRecord = {
      pair: [3, 7],
      winner_id: 3,
      loser_id: 7,
      presentation_order: [7, 3],
      judge_label: "pair-3-7",
      verdict_digest: "abc",
    };
    const rows = comparisonRows([record]);
    expect(rows).toEqual([
      { label: "7 vs 3", winnerId: 3, loserId: 7, judgeLabel: "pair-3-7" },
    ]);
  });
});

describe("consensusRows", () => {
  it("marks flagged items and passes fractions through", () => {
    const rows = consensusRows(CONSENSUS);
    expect(rows).toEqual([
      { item: "ABCA1", direction: "up", supportFraction: 0.625, flagged: true },
      { item: "GENE_B", direction: "down", supportFraction: 0.5, flagged: false },
    ]);
  });
});

describe("runView", () => {
  it("copies summary fields and derives gates", () => {
    const summary: RunSummary = {
      run_id: "r9",
      stage: "await_selection",
      iteration: 2,
      disease_name: "hypothetical cholestatic disease",
      permitted_actions: ["select"],
      artifacts: {},
    };
    const view = runView(summary);
    expect(view.runId).toBe("r9");
    expect(view.iteration).toBe(2);
    expect(view.gates.canSelect).toBe(true);
    expect(view.banner).toMatch(/select/i);
  });
});

describe("formatNumber", () => {
  it("uses fixed precision", () => {
    expect(formatNumber(0.123456)).toBe("0.1235");
    expect(formatNumber(0.5, 3)).toBe("0.500");
  });
});
