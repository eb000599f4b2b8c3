import type { DivergenceDoc, PlanDoc, SnapshotDoc } from "../types";

/**
 * Per-dimension bar charts of expected vs observed proportions, with flagged
 * dimensions badged by their worst divergence metric. Pure function of the
 * endpoint snapshots; nothing is recomputed client-side.
 */
export function renderOverlay(
  container: HTMLElement,
  plan: PlanDoc,
  snapshot: SnapshotDoc,
  divergence: DivergenceDoc,
): void {
  container.innerHTML = "";
  const byDimension = new Map(snapshot.per_dimension.map((d) => [d.dimension, d]));

  for (const dim of plan.dimensions) {
    const section = document.createElement("section");
    section.className = "overlay-dimension";
    section.dataset.dimension = dim.name;

    const title = document.createElement("h3");
    title.textContent = dim.name;
    if (divergence.flagged.includes(dim.name)) {
      const badge = document.createElement("span");
      badge.className = "flag-badge";
      const entry = divergence.entries
        .filter((e) => e.dimension === dim.name && e.flagged)
        .sort((a, b) => b.value - a.value)[0];
      badge.textContent = entry ? `${entry.metric}=${entry.value.toFixed(3)}` : "flagged";
      title.appendChild(badge);
    }
    section.appendChild(title);

    const observed = byDimension.get(dim.name);
    dim.categories.forEach((category, i) => {
      const row = document.createElement("div");
      row.className = "bar-row";
      row.dataset.category = category;

      const label = document.createElement("span");
      label.className = "bar-label";
      label.textContent = category;
      row.appendChild(label);

      const expected = document.createElement("div");
      expected.className = "bar expected";
      expected.style.width = `${(dim.expected[i] * 100).toFixed(1)}%`;
      expected.dataset.value = dim.expected[i].toFixed(6);
      row.appendChild(expected);

      const proportion = observed?.proportions?.[i] ?? 0;
      const observedBar = document.createElement("div");
      observedBar.className = "bar observed";
      observedBar.style.width = `${(proportion * 100).toFixed(1)}%`;
      observedBar.dataset.value = proportion.toFixed(6);
      row.appendChild(observedBar);

      section.appendChild(row);
    });

    container.appendChild(section);
  }
}
