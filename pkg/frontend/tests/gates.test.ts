import { describe, expect, it } from "vitest";
import { gateBanner, gatesFor } from "../src/gates.js";
import type { RunSummary } from "../src/api.js";

function summary(actions: RunSummary["permitted_actions"]): RunSummary {
  return {
    run_id: "r1",
    stage: "query_gen",
    iteration: 1,
    disease_name: "d",
    permitted_actions: actions,
    artifacts: {},
  };
}

describe("gatesFor", () => {
  it("enables only advance for a pipeline stage", () => {
    const gates = gatesFor(summary(["advance"]));
    expect(gates).toEqual({
      canAdvance: true,
      canSelect: false,
      canAttachDataset: false,
      canComplete: false,
      isTerminal: false,
    });
  });

  it("enables only selection at the selection gate", () => {
    const gates = gatesFor(summary(["select"]));
    expect(gates.canSelect).toBe(true);
    expect(gates.canAdvance).toBe(false);
    expect(gates.canAttachDataset).toBe(false);
  });

  it("enables only dataset attachment at the data gate", () => {
    const gates = gatesFor(summary(["attach_dataset"]));
    expect(gates.canAttachDataset).toBe(true);
    expect(gates.canAdvance).toBe(false);
  });

  it("enables both advance and complete after insight synthesis", () => {
    const gates = gatesFor(summary(["advance", "complete"]));
    expect(gates.canAdvance).toBe(true);
    expect(gates.canComplete).toBe(true);
  });

  it("treats an empty action list as terminal", () => {
    const gates = gatesFor(summary([]));
    expect(gates.isTerminal).toBe(true);
    expect(gates.canAdvance).toBe(false);
    expect(gates.canComplete).toBe(false);
  });

  it("derives gates from the action list, not the stage name", () => {
    // A summary claiming an await stage but permitting advance must
    // still enable advance: the server list wins.
    const gates = gatesFor({
      ...summary(["advance"]),
      stage: "await_selection",
    });
    expect(gates.canAdvance).toBe(true);
    expect(gates.canSelect).toBe(false);
  });
});

describe("gateBanner", () => {
  it("describes each gate distinctly", () => {
    const banners = [
      gateBanner(summary([])),
      gateBanner(summary(["select"])),
      gateBanner(summary(["attach_dataset"])),
      gateBanner(summary(["advance", "complete"])),
      gateBanner(summary(["advance"])),
    ];
    expect(new Set(banners).size).toBe(banners.length);
    expect(banners[0]).toMatch(/complete/i);
    expect(banners[1]).toMatch(/select/i);
    expect(banners[2]).toMatch(/dataset/i);
  });
});
