import { ApiClient, ApiError } from "../api";
import { normalizePreview, ViewState } from "../state";

/**
 * Questionnaire flow plus per-dimension expected-distribution entry.
 * Weights normalize live in a preview; the saved values always come from the
 * server response. A stale-version save surfaces the conflict inline.
 */
export function renderPlanEditor(
  container: HTMLElement,
  state: ViewState,
  api: ApiClient,
  onSaved: () => void,
): void {
  container.innerHTML = "";
  const heading = document.createElement("h2");
  heading.textContent = `Plan: ${state.planDraft.name} (v${state.planDraft.expected_version})`;
  container.appendChild(heading);

  if (state.conflict !== null) {
    const banner = document.createElement("div");
    banner.className = "conflict-banner";
    banner.textContent = `Save conflict: ${state.conflict}. Reload the plan and re-apply your edits.`;
    container.appendChild(banner);
  }

  const notice = state.savedPlan?.reflexive?.missing_notice ?? [];
  if (notice.length > 0) {
    const box = document.createElement("div");
    box.className = "missing-notice";
    for (const [dim, cats] of notice) {
      const line = document.createElement("div");
      line.textContent = `${dim}: missing ${cats.join(", ")}`;
      box.appendChild(line);
    }
    container.appendChild(box);
  }

  for (const dim of state.planDraft.dimensions) {
    const section = document.createElement("section");
    section.className = "dimension-editor";
    section.dataset.dimension = dim.name;

    const title = document.createElement("h3");
    title.textContent = dim.name;
    section.appendChild(title);

    const preview = document.createElement("div");
    preview.className = "normalize-preview";

    const refreshPreview = () => {
      try {
        const expected = normalizePreview(dim.weights);
        preview.textContent = dim.categories
          .map((c, i) => `${c}: ${expected[i].toFixed(4)}`)
          .join("  ");
      } catch (err) {
        preview.textContent = err instanceof Error ? err.message : String(err);
      }
    };

    dim.categories.forEach((category, i) => {
      const label = document.createElement("label");
      label.textContent = category;
      const input = document.createElement("input");
      input.type = "number";
      input.min = "0";
      input.value = String(dim.weights[i]);
      input.dataset.category = category;
      input.addEventListener("input", () => {
        const next = [...dim.weights];
        next[i] = Number(input.value);
        state.editWeights(dim.name, next);
        refreshPreview();
      });
      label.appendChild(input);
      section.appendChild(label);
    });

    refreshPreview();
    section.appendChild(preview);
    container.appendChild(section);
  }

  const save = document.createElement("button");
  save.className = "save-plan";
  save.textContent = "Save plan";
  save.addEventListener("click", () => {
    void (async () => {
      try {
        const doc = await api.savePlan(state.planDraft);
        state.saved(doc);
        onSaved();
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          state.conflicted(err.body.message);
          renderPlanEditor(container, state, api, onSaved);
        } else {
          throw err;
        }
      }
    })();
  });
  container.appendChild(save);
}
