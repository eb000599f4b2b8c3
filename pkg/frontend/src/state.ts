import type { PlanDoc, PlanDraft } from "./types";

/**
 * Client-side normalization preview. Mirrors the server's rule for
 * responsiveness only — the value persisted always comes back from the
 * server response, never from this function.
 */
export function normalizePreview(weights: number[]): number[] {
  if (weights.some((w) => w < 0 || !Number.isFinite(w))) {
    throw new Error("weights must be finite and non-negative");
  }
  const total = weights.reduce((a, b) => a + b, 0);
  if (total <= 0) throw new Error("weights must sum to a positive value");
  return weights.map((w) => w / total);
}

/** Single-page view state. Draft edits never touch the server until save. */
export class ViewState {
  planDraft: PlanDraft = { name: "project", expected_version: 0, dimensions: [] };
  /** Last server-confirmed plan; null until first load or save. */
  savedPlan: PlanDoc | null = null;
  dirty = false;
  waveFilter: number | null = null;
  intersectionDims: string[] = [];
  reviewFraction = 0.001;
  reviewCursor = 0;
  /** Set when a save hit a version conflict; cleared on reload. */
  conflict: string | null = null;

  /** Adopt the server's plan as the new baseline, discarding nothing dirty. */
  loadPlan(doc: PlanDoc): void {
    this.savedPlan = doc;
    this.conflict = null;
    if (!this.dirty) {
      this.planDraft = {
        name: doc.name,
        expected_version: doc.version,
        dimensions: doc.dimensions.map((d) => ({
          name: d.name,
          categories: [...d.categories],
          weights: [...d.raw_weights],
        })),
      };
    } else {
      // keep the user's edits but retarget the version they must supersede
      this.planDraft.expected_version = doc.version;
    }
  }

  editWeights(dimension: string, weights: number[]): void {
    const dim = this.planDraft.dimensions.find((d) => d.name === dimension);
    if (!dim) throw new Error(`no draft dimension named ${dimension}`);
    dim.weights = [...weights];
    this.dirty = true;
  }

  addDimension(name: string, categories: string[], weights: number[]): void {
    this.planDraft.dimensions.push({ name, categories: [...categories], weights: [...weights] });
    this.dirty = true;
  }

  /** Called with the server response after a successful save. */
  saved(doc: PlanDoc): void {
    this.dirty = false;
    this.loadPlan(doc);
  }

  /** Called when a save came back 409; the user must reload and re-apply. */
  conflicted(message: string): void {
    this.conflict = message;
  }
}
