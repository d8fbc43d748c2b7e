import { Api, type FitSummary, type ScaleOptions } from "./api.js";
import { predictionColumns } from "./state.js";

export type FitPanelOptions = {
  onError?: (message: string) => void;
  /** Poll interval for /fit/status while a fit is in flight. */
  pollMs?: number;
};

/**
 * Formula form plus the choropleth gallery.
 *
 * Submitting POSTs /fit and polls /fit/status until the request resolves,
 * then fetches one server-rendered choropleth per prediction column. The
 * diverging-scale controls re-fetch the same columns with new colours —
 * the client never computes a colour scale itself.
 */
export class FitPanel {
  readonly formulaInput: HTMLInputElement;
  readonly familySelect: HTMLSelectElement;
  readonly submitButton: HTMLButtonElement;
  readonly statusEl: HTMLElement;
  readonly chartsEl: HTMLElement;

  private readonly scaleInputs: Record<"low" | "mid" | "high" | "midpoint", HTMLInputElement>;
  private summary: FitSummary | null = null;
  private running = false;
  private lastRun: Promise<void> = Promise.resolve();

  constructor(
    container: HTMLElement,
    private readonly api: Api,
    private readonly opts: FitPanelOptions = {},
  ) {
    container.innerHTML = `
      <div class="fit-form">
        <input class="formula" placeholder="y ~ x + s(name, bs='mrf')" />
        <select class="family">
          <option value="gaussian">gaussian</option>
          <option value="poisson">poisson</option>
        </select>
        <button type="button" class="fit-submit">fit</button>
        <span class="fit-status">idle</span>
      </div>
      <div class="scale-controls">
        <label>low <input class="scale-low" value="darkgreen" /></label>
        <label>mid <input class="scale-mid" value="ivory" /></label>
        <label>high <input class="scale-high" value="darkred" /></label>
        <label>midpoint <input class="scale-midpoint" value="0" /></label>
        <button type="button" class="scale-apply">apply scale</button>
      </div>
      <div class="charts"></div>
    `;
    const pick = <T extends Element>(sel: string): T => container.querySelector(sel) as T;
    this.formulaInput = pick(".formula");
    this.familySelect = pick(".family");
    this.submitButton = pick(".fit-submit");
    this.statusEl = pick(".fit-status");
    this.chartsEl = pick(".charts");
    this.scaleInputs = {
      low: pick(".scale-low"),
      mid: pick(".scale-mid"),
      high: pick(".scale-high"),
      midpoint: pick(".scale-midpoint"),
    };
    this.submitButton.addEventListener("click", () => {
      this.lastRun = this.submit();
    });
    pick<HTMLButtonElement>(".scale-apply").addEventListener("click", () => {
      this.lastRun = this.renderCharts();
    });
  }

  /** The promise of the most recent submit or re-render, for awaiting. */
  settled(): Promise<void> {
    return this.lastRun;
  }

  scale(): ScaleOptions {
    const midpoint = Number(this.scaleInputs.midpoint.value);
    return {
      low: this.scaleInputs.low.value,
      mid: this.scaleInputs.mid.value,
      high: this.scaleInputs.high.value,
      midpoint: Number.isFinite(midpoint) ? midpoint : 0,
    };
  }

  async submit(): Promise<void> {
    if (this.running) {
      return;
    }
    const formula = this.formulaInput.value.trim();
    if (formula === "") {
      this.opts.onError?.("enter a formula first");
      return;
    }
    const family = this.familySelect.value as "gaussian" | "poisson";
    this.running = true;
    this.statusEl.textContent = "running";
    const poll = setInterval(() => {
      this.api
        .fitStatus()
        .then((s) => {
          if (this.running && s.state === "running") {
            this.statusEl.textContent = "running";
          }
        })
        .catch(() => {
          // polling is best-effort; the POST carries the real outcome
        });
    }, this.opts.pollMs ?? 250);
    try {
      const summary = await this.api.submitFit(formula, family);
      this.summary = summary;
      const pct = (summary.deviance_explained * 100).toFixed(1);
      this.statusEl.textContent = `done — aic ${summary.aic.toFixed(2)}, deviance explained ${pct}%`;
      await this.renderCharts();
    } catch (err) {
      this.summary = null;
      this.chartsEl.textContent = "";
      this.statusEl.textContent = "error";
      this.opts.onError?.(err instanceof Error ? err.message : String(err));
    } finally {
      clearInterval(poll);
      this.running = false;
    }
  }

  /** One server-rendered choropleth per prediction column, in order. */
  async renderCharts(): Promise<void> {
    this.chartsEl.textContent = "";
    if (this.summary === null) {
      return;
    }
    const scale = this.scale();
    for (const column of predictionColumns(this.summary)) {
      const svg = await this.api.predictionSvg(column, scale);
      const figure = document.createElement("figure");
      figure.className = "chart";
      figure.setAttribute("data-column", column);
      const holder = document.createElement("div");
      holder.className = "chart-svg";
      holder.innerHTML = svg;
      const caption = document.createElement("figcaption");
      caption.textContent = column;
      figure.appendChild(holder);
      figure.appendChild(caption);
      this.chartsEl.appendChild(figure);
    }
  }
}
