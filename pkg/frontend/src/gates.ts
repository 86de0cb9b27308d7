/**
 * Gate logic. The server is the single source of truth: every run
 * summary carries `permitted_actions`, and controls are enabled purely
 * from that list. Nothing here inspects the stage name to decide what
 * a user may do.
 */

import type { Action, RunSummary } from "./api.js";

export interface GateState {
  canAdvance: boolean;
  canSelect: boolean;
  canAttachDataset: boolean;
  canComplete: boolean;
  isTerminal: boolean;
}

export function gatesFor(summary: Pick<RunSummary, "permitted_actions">): GateState {
  const actions = new Set<Action>(summary.permitted_actions);
  return {
    canAdvance: actions.has("advance"),
    canSelect: actions.has("select"),
    canAttachDataset: actions.has("attach_dataset"),
    canComplete: actions.has("complete"),
    isTerminal: actions.size === 0,
  };
}

/** Human-readable banner for the run header, derived from the gates. */
export function gateBanner(summary: RunSummary): string {
  const gates = gatesFor(summary);
  if (gates.isTerminal) {
    return "Run complete.";
  }
  if (gates.canSelect) {
    return "Waiting on reviewer: select candidates to carry forward.";
  }
  if (gates.canAttachDataset) {
    return "Waiting on reviewer: attach the experimental dataset.";
  }
  if (gates.canComplete) {
    return "Insight ready: advance to iterate, or complete the run.";
  }
  return "Pipeline ready to advance.";
}
