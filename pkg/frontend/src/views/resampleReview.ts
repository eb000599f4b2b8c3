import { ApiClient } from "../api";
import type { MatrixDoc, ResamplePlanDoc } from "../types";

/**
 * Proposed resample plan: removals/additions with pairing costs, a parity
 * badge, an approve button, and the accuracy-delta heatmap after retraining
 * (green positive, purple negative).
 */
export function renderResampleReview(
  container: HTMLElement,
  planName: string,
  plan: ResamplePlanDoc,
  delta: MatrixDoc | null,
  api: ApiClient,
  onApplied: (version: number) => void,
): void {
  container.innerHTML = "";

  const parity = document.createElement("span");
  parity.className =
    plan.remove_ids.length === plan.add_ids.length ? "parity-badge equal" : "parity-badge unequal";
  parity.textContent = `-${plan.remove_ids.length} / +${plan.add_ids.length}`;
  container.appendChild(parity);

  const pairs = document.createElement("table");
  pairs.className = "pairing-table";
  for (const [exemplar, candidate, cost] of plan.pairing) {
    const tr = document.createElement("tr");
    for (const text of [exemplar, candidate, cost.toFixed(3)]) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    pairs.appendChild(tr);
  }
  container.appendChild(pairs);

  const approve = document.createElement("button");
  approve.className = "approve-plan";
  approve.textContent = "Approve and apply";
  approve.addEventListener("click", () => {
    void api.applyResample(planName).then((dataset) => onApplied(dataset.version));
  });
  container.appendChild(approve);

  if (delta !== null) {
    const table = document.createElement("table");
    table.className = "delta-heatmap";
    delta.groups.forEach((group, r) => {
      const tr = document.createElement("tr");
      const th = document.createElement("th");
      th.textContent = group;
      tr.appendChild(th);
      delta.values[r].forEach((value) => {
        const td = document.createElement("td");
        if (value === null) {
          td.className = "delta-cell empty";
          td.textContent = "—";
        } else {
          td.className = value >= 0 ? "delta-cell positive" : "delta-cell negative";
          td.textContent = value.toFixed(3);
        }
        tr.appendChild(td);
      });
      table.appendChild(tr);
    });
    container.appendChild(table);
  }
}
