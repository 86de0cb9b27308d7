/**
 * Typed client for the run service. Pure transport: every payload is
 * passed through untouched so views mirror the server byte-for-byte.
 * The fetch implementation is injectable for tests.
 */

export type Stage =
  | "query_gen"
  | "assay_lit_review"
  | "assay_hyp_gen"
  | "assay_reports"
  | "assay_tournament"
  | "goal_synthesis"
  | "candidate_query_gen"
  | "candidate_lit_review"
  | "candidate_hyp_gen"
  | "candidate_reports"
  | "candidate_tournament"
  | "await_selection"
  | "await_data"
  | "trajectory_analysis"
  | "consensus"
  | "insight_synthesis"
  | "complete";

export type Action = "advance" | "select" | "attach_dataset" | "complete";

export interface RunSummary {
  run_id: string;
  stage: Stage;
  iteration: number;
  disease_name: string;
  permitted_actions: Action[];
  artifacts: Record<string, string>;
}

export interface RankingEntry {
  hypothesis_id: number;
  strength: number;
}

export interface RankingDoc {
  iteration: number;
  ranking: { entries: RankingEntry[]; tie_note: number[][] };
  fit?: unknown;
  names: Record<string, string>;
}

export interface ComparisonRecord {
  pair: number[];
  winner_id: number;
  loser_id: number;
  presentation_order: number[];
  judge_label: string;
  verdict_digest: string;
}

export interface ConsensusItem {
  item: string;
  direction: "up" | "down" | "neutral";
  support_fraction: number;
  counts: Record<string, number>;
}

export interface ConsensusDoc {
  items: ConsensusItem[];
  threshold: number;
  flagged: string[];
  n_trajectories_used: number;
  warnings: string[];
}

export interface ApiError {
  code: string;
  message: string;
  stage: string | null;
}

export class ApiFailure extends Error {
  constructor(
    readonly status: number,
    readonly error: ApiError,
  ) {
    super(`${error.code}: ${error.message}`);
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; body?: BodyInit; headers?: Record<string, string> },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: Parameters<FetchLike>[1]): Promise<T> {
    const response = await this.fetchImpl(this.base + path, init);
    const body = (await response.json()) as unknown;
    if (!response.ok) {
      const err = body as Partial<ApiError>;
      throw new ApiFailure(response.status, {
        code: err.code ?? "unknown_error",
        message: err.message ?? `HTTP ${response.status}`,
        stage: err.stage ?? null,
      });
    }
    return body as T;
  }

  listRuns(): Promise<RunSummary[]> {
    return this.request("/runs");
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.request(`/runs/${runId}`);
  }

  getRanking(runId: string): Promise<RankingDoc> {
    return this.request(`/runs/${runId}/ranking`);
  }

  getComparisons(runId: string): Promise<ComparisonRecord[]> {
    return this.request(`/runs/${runId}/comparisons`);
  }

  getConsensus(runId: string): Promise<ConsensusDoc> {
    return this.request(`/runs/${runId}/consensus`);
  }

  getArtifact(runId: string, key: string): Promise<Record<string, unknown>> {
    return this.request(`/runs/${runId}/artifacts/${key}`);
  }

  advance(runId: string): Promise<RunSummary> {
    return this.request(`/runs/${runId}/advance`, { method: "POST" });
  }

  complete(runId: string): Promise<RunSummary> {
    return this.request(`/runs/${runId}/complete`, { method: "POST" });
  }

  submitSelection(
    runId: string,
    selectedIds: number[],
    selector: string,
    rationale: string,
  ): Promise<RunSummary> {
    return this.request(`/runs/${runId}/selection`, {
      method: "POST",
      body: JSON.stringify({
        selected_ids: selectedIds,
        selector,
        rationale,
      }),
      headers: { "Content-Type": "application/json" },
    });
  }

  attachDataset(
    runId: string,
    archive: File,
    metadata: File,
    analysisPrompt: string,
  ): Promise<RunSummary> {
    const form = new FormData();
    form.append("archive", archive);
    form.append("metadata", metadata);
    form.append("analysis_prompt", analysisPrompt);
    return this.request(`/runs/${runId}/dataset`, { method: "POST", body: form });
  }
}
