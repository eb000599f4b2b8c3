import { ApiClient, ApiError } from "./api";
import { Poller } from "./poll";
import { ViewState } from "./state";
import { renderFamiliarity } from "./views/familiarityView";
import { renderHeatmap } from "./views/intersectionHeatmap";
import { renderOverlay } from "./views/overlayView";
import { renderPlanEditor } from "./views/planEditor";

const api = new ApiClient("");
const state = new ViewState();

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing panel #${id}`);
  return el;
}

async function refreshPlan(): Promise<void> {
  try {
    state.loadPlan(await api.getPlan());
  } catch (err) {
    if (!(err instanceof ApiError && err.status === 404)) throw err;
  }
  renderPlanEditor(panel("plan-editor"), state, api, () => void refreshMonitoring());
}

async function refreshMonitoring(): Promise<void> {
  if (state.savedPlan === null) return;
  const wave = state.waveFilter ?? undefined;
  const [snapshot, divergence] = await Promise.all([api.snapshot(wave), api.divergence(wave)]);
  renderOverlay(panel("overlay"), state.savedPlan, snapshot, divergence);
  if (state.intersectionDims.length > 0) {
    renderHeatmap(panel("heatmap"), await api.gaps(state.intersectionDims));
  }
}

async function refreshFamiliarity(): Promise<void> {
  try {
    const [scores, queue, least, most] = await Promise.all([
      api.scores(),
      api.review(state.reviewFraction),
      api.tail(state.reviewFraction, "least"),
      api.tail(state.reviewFraction, "most"),
    ]);
    renderFamiliarity(
      panel("familiarity"),
      scores,
      queue,
      least.ids,
      most.ids,
      api,
      () => void refreshFamiliarity(),
    );
  } catch (err) {
    if (!(err instanceof ApiError && err.status === 404)) throw err;
  }
}

async function refreshAll(): Promise<void> {
  await refreshPlan();
  await refreshMonitoring();
  await refreshFamiliarity();
}

const poller = new Poller(refreshAll);

void refreshAll().then(() => poller.start());
