import { describe, expect, it } from "vitest";

import { normalizePreview, ViewState } from "../src/state";
import type { PlanDoc } from "../src/types";

function planDoc(version = 1): PlanDoc {
  return {
    name: "study",
    version,
    created: "2026-01-01T00:00:00+00:00",
    modified: "2026-01-01T00:00:00+00:00",
    dimensions: [
      {
        name: "size",
        kind: "categorical",
        categories: ["small", "medium", "large"],
        raw_weights: [30, 30, 60],
        expected: [0.25, 0.25, 0.5],
        positions: null,
      },
    ],
    reflexive: null,
  };
}

describe("normalizePreview", () => {
  it("normalizes raw weights like the server", () => {
    expect(normalizePreview([30, 30, 60])).toEqual([0.25, 0.25, 0.5]);
  });

  it("passes through an already-normalized vector", () => {
    const result = normalizePreview([0.25, 0.25, 0.5]);
    expect(result[2]).toBeCloseTo(0.5, 12);
  });

  it("rejects negative weights", () => {
    expect(() => normalizePreview([1, -1])).toThrow();
  });

  it("rejects an all-zero vector", () => {
    expect(() => normalizePreview([0, 0])).toThrow();
  });
});

describe("ViewState", () => {
  it("adopts the server plan into the draft when clean", () => {
    const state = new ViewState();
    state.loadPlan(planDoc());
    expect(state.planDraft.expected_version).toBe(1);
    expect(state.planDraft.dimensions[0].weights).toEqual([30, 30, 60]);
  });

  it("keeps dirty edits on reload but retargets the version", () => {
    const state = new ViewState();
    state.loadPlan(planDoc());
    state.editWeights("size", [10, 10, 10]);
    state.loadPlan(planDoc(5));
    expect(state.planDraft.dimensions[0].weights).toEqual([10, 10, 10]);
    expect(state.planDraft.expected_version).toBe(5);
  });

  it("clears dirty and conflict after a successful save", () => {
    const state = new ViewState();
    state.loadPlan(planDoc());
    state.editWeights("size", [1, 1, 2]);
    state.conflicted("plan is at v2");
    state.saved(planDoc(2));
    expect(state.dirty).toBe(false);
    expect(state.conflict).toBeNull();
    expect(state.planDraft.expected_version).toBe(2);
  });

  it("rejects edits to unknown dimensions", () => {
    const state = new ViewState();
    state.loadPlan(planDoc());
    expect(() => state.editWeights("nope", [1])).toThrow();
  });
});
