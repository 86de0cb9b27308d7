/** DOM rendering. Builds elements with textContent only (no innerHTML
 * of server data) so payload text can never inject markup. */

import type { ComparisonRow, ConsensusRow, RankingRow, RunView } from "./viewmodel.js";
import { formatNumber } from "./viewmodel.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  text?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (text !== undefined) {
    node.textContent = text;
  }
  if (className) {
    node.className = className;
  }
  return node;
}

function table(headers: string[], rows: string[][]): HTMLTableElement {
  const node = el("table");
  const head = node.createTHead().insertRow();
  for (const header of headers) {
    head.appendChild(el("th", header));
  }
  const body = node.createTBody();
  for (const cells of rows) {
    const row = body.insertRow();
    for (const cell of cells) {
      row.insertCell().textContent = cell;
    }
  }
  return node;
}

export function renderHeader(container: HTMLElement, view: RunView): void {
  container.replaceChildren(
    el("h1", `Run ${view.runId}`),
    el("p", `${view.diseaseName} — stage ${view.stage}, iteration ${view.iteration}`),
    el("p", view.banner, "banner"),
  );
}

export function renderRanking(container: HTMLElement, rows: RankingRow[]): void {
  container.replaceChildren(
    el("h2", "Candidate ranking"),
    table(
      ["Rank", "Id", "Name", "Strength", "Tied with"],
      rows.map((row) => [
        String(row.rank),
        String(row.hypothesisId),
        row.name,
        formatNumber(row.strength),
        row.tiedWith.join(", "),
      ]),
    ),
  );
}

export function renderComparisons(container: HTMLElement, rows: ComparisonRow[]): void {
  container.replaceChildren(
    el("h2", `Comparisons (${rows.length})`),
    table(
      ["Pair", "Winner", "Loser", "Judge"],
      rows.map((row) => [
        row.label,
        String(row.winnerId),
        String(row.loserId),
        row.judgeLabel,
      ]),
    ),
  );
}

export function renderConsensus(container: HTMLElement, rows: ConsensusRow[]): void {
  container.replaceChildren(
    el("h2", "Consensus"),
    table(
      ["Item", "Direction", "Support", "Flagged"],
      rows.map((row) => [
        row.item,
        row.direction,
        formatNumber(row.supportFraction, 3),
        row.flagged ? "yes" : "",
      ]),
    ),
  );
}

export function renderError(container: HTMLElement, message: string): void {
  container.replaceChildren(el("p", message, "error"));
}
