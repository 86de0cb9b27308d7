/** Application bootstrap: pick a run, poll its state, and wire the gate
 * controls. Every mutation re-fetches from the server — no optimistic
 * updates — and server error messages are shown verbatim. */

import { ApiClient, ApiFailure, type RunSummary } from "./api.js";
import {
  comparisonRows,
  consensusRows,
  rankingRows,
  runView,
} from "./viewmodel.js";
import {
  renderComparisons,
  renderConsensus,
  renderError,
  renderHeader,
  renderRanking,
} from "./render.js";

const POLL_MS = 3000;

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

function describe(err: unknown): string {
  if (err instanceof ApiFailure) {
    const stage = err.error.stage ? ` (stage ${err.error.stage})` : "";
    return `${err.error.code}: ${err.error.message}${stage}`;
  }
  return err instanceof Error ? err.message : String(err);
}

export class App {
  private runId: string | null = null;

  constructor(private readonly api: ApiClient) {}

  async start(): Promise<void> {
    await this.refreshRunList();
    window.setInterval(() => void this.refresh(), POLL_MS);
    this.wireControls();
  }

  private async refreshRunList(): Promise<void> {
    const runs = await this.api.listRuns();
    const picker = byId("run-picker") as HTMLSelectElement;
    picker.replaceChildren(
      ...runs.map((run) => {
        const option = document.createElement("option");
        option.value = run.run_id;
        option.textContent = `${run.run_id} — ${run.stage}`;
        return option;
      }),
    );
    picker.onchange = () => {
      this.runId = picker.value;
      void this.refresh();
    };
    if (runs.length > 0) {
      this.runId = runs[0].run_id;
      await this.refresh();
    }
  }

  private async refresh(): Promise<void> {
    if (!this.runId) {
      return;
    }
    try {
      const summary = await this.api.getRun(this.runId);
      this.renderSummary(summary);
      await Promise.all([
        this.renderRankingPanel(),
        this.renderComparisonsPanel(),
        this.renderConsensusPanel(),
      ]);
    } catch (err) {
      renderError(byId("status"), describe(err));
    }
  }

  private renderSummary(summary: RunSummary): void {
    const view = runView(summary);
    renderHeader(byId("header"), view);
    (byId("btn-advance") as HTMLButtonElement).disabled = !view.gates.canAdvance;
    (byId("btn-select") as HTMLButtonElement).disabled = !view.gates.canSelect;
    (byId("btn-dataset") as HTMLButtonElement).disabled = !view.gates.canAttachDataset;
    (byId("btn-complete") as HTMLButtonElement).disabled = !view.gates.canComplete;
    byId("status").replaceChildren();
  }

  private async renderRankingPanel(): Promise<void> {
    try {
      const doc = await this.api.getRanking(this.runId!);
      renderRanking(byId("ranking"), rankingRows(doc));
    } catch {
      byId("ranking").replaceChildren();
    }
  }

  private async renderComparisonsPanel(): Promise<void> {
    const records = await this.api.getComparisons(this.runId!);
    if (records.length > 0) {
      renderComparisons(byId("comparisons"), comparisonRows(records));
    }
  }

  private async renderConsensusPanel(): Promise<void> {
    try {
      const doc = await this.api.getConsensus(this.runId!);
      renderConsensus(byId("consensus"), consensusRows(doc));
    } catch {
      byId("consensus").replaceChildren();
    }
  }

  private wireControls(): void {
    const act = (work: () => Promise<unknown>) => {
      void work()
        .then(() => this.refresh())
        .catch((err) => renderError(byId("status"), describe(err)));
    };

    byId("btn-advance").onclick = () => act(() => this.api.advance(this.runId!));
    byId("btn-complete").onclick = () => act(() => this.api.complete(this.runId!));

    byId("btn-select").onclick = () => {
      const raw = (byId("select-ids") as HTMLInputElement).value;
      const ids = raw
        .split(",")
        .map((part) => part.trim())
        .filter((part) => part.length > 0)
        .map(Number);
      if (ids.some((n) => !Number.isInteger(n))) {
        renderError(byId("status"), "selection ids must be comma-separated integers");
        return;
      }
      const rationale = (byId("select-rationale") as HTMLInputElement).value;
      act(() => this.api.submitSelection(this.runId!, ids, "reviewer", rationale));
    };

    byId("btn-dataset").onclick = () => {
      const archive = (byId("dataset-archive") as HTMLInputElement).files?.[0];
      const metadata = (byId("dataset-metadata") as HTMLInputElement).files?.[0];
      if (!archive || !metadata) {
        renderError(byId("status"), "choose both an archive and a metadata file");
        return;
      }
      const prompt = (byId("dataset-prompt") as HTMLInputElement).value;
      act(() => this.api.attachDataset(this.runId!, archive, metadata, prompt));
    };
  }
}

if (typeof document !== "undefined" && document.getElementById("header")) {
  void new App(new ApiClient("")).start();
}
