import type { GapsDoc } from "../types";

/**
 * Observed vs expected counts per intersectional cell, deficit-sorted as
 * delivered by the endpoint; zero-count cells highlighted.
 */
export function renderHeatmap(
  container: HTMLElement,
  gaps: GapsDoc,
  onCellClick?: (cell: Record<string, string>) => void,
): void {
  container.innerHTML = "";
  const table = document.createElement("table");
  table.className = "gap-heatmap";

  const head = document.createElement("tr");
  for (const col of ["cell", "observed", "expected", "deficit"]) {
    const th = document.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const entry of gaps.undersampled) {
    const tr = document.createElement("tr");
    tr.className = entry.observed_count === 0 ? "gap-row zero-count" : "gap-row";
    const label = Object.entries(entry.cell)
      .map(([dim, cat]) => `${dim}=${cat}`)
      .join(" × ");
    for (const text of [
      label,
      String(entry.observed_count),
      String(entry.expected_count),
      String(entry.deficit),
    ]) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    if (onCellClick) tr.addEventListener("click", () => onCellClick(entry.cell));
    table.appendChild(tr);
  }

  container.appendChild(table);
}
