/** JSON document shapes returned by the HTTP service. */

export interface DimensionDoc {
  name: string;
  kind: string;
  categories: string[];
  raw_weights: number[];
  expected: number[];
  positions: number[] | null;
}

export interface ReflexiveDoc {
  answers: [string, string][];
  team_declared: Record<string, string[]>;
  missing_notice: [string, string[]][];
  timestamp: string;
}

export interface PlanDoc {
  name: string;
  version: number;
  created: string;
  modified: string;
  dimensions: DimensionDoc[];
  reflexive: ReflexiveDoc | null;
}

export interface DimensionCountsDoc {
  dimension: string;
  counts: number[];
  missing: number;
  proportions: number[] | null;
}

export interface SnapshotDoc {
  wave_filter: number | null;
  total: number;
  per_dimension: DimensionCountsDoc[];
}

export interface DivergenceEntryDoc {
  dimension: string;
  metric: string;
  value: number;
  threshold: number;
  flagged: boolean;
}

export interface DivergenceDoc {
  entries: DivergenceEntryDoc[];
  flagged: string[];
}

export interface GapEntryDoc {
  cell: Record<string, string>;
  observed_count: number;
  expected_count: number;
  deficit: number;
}

export interface GapsDoc {
  min_count: number;
  total_records: number;
  undersampled: GapEntryDoc[];
}

export interface ScoreEntryDoc {
  id: string;
  score: number;
}

export interface ScoresDoc {
  name: string;
  entries: ScoreEntryDoc[];
}

export interface ReviewEntryDoc {
  id: string;
  score: number;
  metadata: [string, string][];
  verdict: string;
}

export interface ReviewQueueDoc {
  fraction: number;
  entries: ReviewEntryDoc[];
}

export interface ResamplePlanDoc {
  remove_ids: string[];
  add_ids: string[];
  pairing: [string, string, number][];
  strategy: { kind: string; k: number; i: number; seed: number };
}

export interface DatasetDoc {
  version: number;
  ids: string[];
}

export interface MatrixDoc {
  groups: string[];
  models: string[];
  values: (number | null)[][];
}

export interface RecordDoc {
  id: string;
  values: Record<string, string>;
  wave: number;
  session: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: string;
}

/** Editable plan draft: raw weights as the user typed them. */
export interface DimensionDraft {
  name: string;
  categories: string[];
  weights: number[];
}

export interface PlanDraft {
  name: string;
  expected_version: number;
  dimensions: DimensionDraft[];
}
