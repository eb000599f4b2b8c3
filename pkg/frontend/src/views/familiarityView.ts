import { ApiClient } from "../api";
import type { ReviewQueueDoc, ScoresDoc } from "../types";

export const VERDICTS = ["rare", "noisy", "error", "ok", "undecided"] as const;

/** Equal-width histogram bins over the score range, for the two-tail overview. */
export function histogramBins(
  scores: number[],
  binCount: number,
): { lo: number; hi: number; count: number }[] {
  if (scores.length === 0 || binCount < 1) return [];
  const min = Math.min(...scores);
  const max = Math.max(...scores);
  const width = (max - min) / binCount || 1;
  const bins = Array.from({ length: binCount }, (_, i) => ({
    lo: min + i * width,
    hi: min + (i + 1) * width,
    count: 0,
  }));
  for (const s of scores) {
    const idx = Math.min(binCount - 1, Math.floor((s - min) / width));
    bins[idx].count += 1;
  }
  return bins;
}

/**
 * Score histogram with least/most-familiar tails, per-category strips showing
 * which categories dominate the unfamiliar tail, and the review queue with
 * verdict buttons.
 */
export function renderFamiliarity(
  container: HTMLElement,
  scores: ScoresDoc,
  queue: ReviewQueueDoc,
  leastIds: string[],
  mostIds: string[],
  api: ApiClient,
  onVerdict: () => void,
): void {
  container.innerHTML = "";

  const histogram = document.createElement("div");
  histogram.className = "score-histogram";
  const values = scores.entries.map((e) => e.score);
  const least = new Set(leastIds);
  const most = new Set(mostIds);
  for (const bin of histogramBins(values, 40)) {
    const bar = document.createElement("div");
    bar.className = "hist-bar";
    bar.dataset.count = String(bin.count);
    bar.style.height = `${bin.count}px`;
    histogram.appendChild(bar);
  }
  container.appendChild(histogram);

  const tails = document.createElement("div");
  tails.className = "tails";
  const leastBox = document.createElement("div");
  leastBox.className = "tail least";
  leastBox.textContent = `least familiar: ${leastIds.join(", ")}`;
  const mostBox = document.createElement("div");
  mostBox.className = "tail most";
  mostBox.textContent = `most familiar: ${mostIds.join(", ")}`;
  tails.append(leastBox, mostBox);
  container.appendChild(tails);

  // per-category strips: share of the unfamiliar tail per metadata value
  const stripCounts = new Map<string, number>();
  for (const entry of queue.entries) {
    if (!least.has(entry.id) && !most.has(entry.id) && leastIds.length > 0) continue;
    for (const [dim, cat] of entry.metadata) {
      const key = `${dim}=${cat}`;
      stripCounts.set(key, (stripCounts.get(key) ?? 0) + 1);
    }
  }
  const strips = document.createElement("div");
  strips.className = "category-strips";
  for (const [key, count] of [...stripCounts.entries()].sort((a, b) => b[1] - a[1])) {
    const strip = document.createElement("div");
    strip.className = "strip";
    strip.dataset.key = key;
    strip.textContent = `${key}: ${count}`;
    strips.appendChild(strip);
  }
  container.appendChild(strips);

  const list = document.createElement("ol");
  list.className = "review-queue";
  for (const entry of queue.entries) {
    const item = document.createElement("li");
    item.dataset.id = entry.id;
    item.dataset.verdict = entry.verdict;

    const label = document.createElement("span");
    label.textContent = `${entry.id} (${entry.score.toFixed(3)}) — ${entry.verdict}`;
    item.appendChild(label);

    for (const verdict of VERDICTS) {
      if (verdict === "undecided") continue;
      const button = document.createElement("button");
      button.className = `verdict-${verdict}`;
      button.textContent = verdict;
      button.addEventListener("click", () => {
        void api.setVerdict(entry.id, verdict).then(onVerdict);
      });
      item.appendChild(button);
    }
    list.appendChild(item);
  }
  container.appendChild(list);
}
