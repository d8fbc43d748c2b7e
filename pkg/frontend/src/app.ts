import { Api, type NbPayload } from "./api.js";
import { renderAudit } from "./audit.js";
import { FitPanel } from "./fitpanel.js";
import { MapView, type NodeMode } from "./mapview.js";
import { hasEdge } from "./state.js";
import { showToast } from "./toasts.js";

export type AppOptions = {
  /** Replace the cut-confirmation dialog; defaults to window.confirm. */
  confirmCut?: (message: string) => boolean;
};

export type App = {
  api: Api;
  map: MapView;
  fit: FitPanel;
  clickUnit(name: string): void;
  undo(): void;
  setNodeMode(mode: NodeMode): void;
  selection(): string[];
  overlayEdgeKeys(): Set<string>;
  /** Resolves once every action queued so far has finished. */
  settle(): Promise<void>;
};

const LAYOUT = `
  <header class="topbar">
    <h1>arelink</h1>
    <div class="controls">
      <label><input type="radio" name="node-mode" value="point" checked /> point nodes</label>
      <label><input type="radio" name="node-mode" value="numeric" /> numeric nodes</label>
      <button type="button" class="undo">undo</button>
    </div>
  </header>
  <main>
    <section class="map-pane"></section>
    <aside class="side">
      <section class="audit-pane">
        <h2>island audit</h2>
        <div class="audit"></div>
      </section>
      <section class="fit-pane">
        <h2>fit</h2>
        <div class="fit"></div>
      </section>
    </aside>
  </main>
  <div class="toasts"></div>
`;

/**
 * Wire the whole page against one running server session.
 *
 * All mutations run through a single promise chain, so rapid clicks are
 * serialized, and the overlay is only ever redrawn from a server response —
 * a failed edit re-syncs from GET /nb instead of trusting local state.
 */
export async function initApp(
  root: HTMLElement,
  baseUrl: string,
  options: AppOptions = {},
): Promise<App> {
  const api = new Api(baseUrl);
  const confirmCut = options.confirmCut ?? ((message: string) => window.confirm(message));

  root.innerHTML = LAYOUT;
  const mapPane = root.querySelector(".map-pane") as HTMLElement;
  const auditEl = root.querySelector(".audit") as HTMLElement;
  const fitEl = root.querySelector(".fit") as HTMLElement;
  const toasts = root.querySelector(".toasts") as HTMLElement;

  const [areas, nb, audit] = await Promise.all([api.areas(), api.nb(), api.audit()]);

  let current = nb;
  let selected: string[] = [];
  let chain: Promise<void> = Promise.resolve();

  const fail = (err: unknown): void => {
    showToast(toasts, err instanceof Error ? err.message : String(err));
  };

  const map = new MapView(mapPane, areas, nb.names, {
    onUnitClick: (name) => clickUnit(name),
    onEdgeClick: (a, b) => cutEdge(a, b),
  });

  function applyNb(payload: NbPayload): void {
    current = payload;
    map.syncOverlay(payload);
  }

  async function refreshAudit(): Promise<void> {
    renderAudit(auditEl, await api.audit());
  }

  applyNb(nb);
  renderAudit(auditEl, audit);

  function enqueue(fn: () => Promise<void>): void {
    chain = chain.then(fn).catch(fail);
  }

  async function mutate(run: () => Promise<NbPayload>): Promise<void> {
    try {
      applyNb(await run());
    } catch (err) {
      fail(err);
      applyNb(await api.nb());
    }
    await refreshAudit();
  }

  function clickUnit(name: string): void {
    enqueue(async () => {
      if (selected.includes(name)) {
        selected = selected.filter((n) => n !== name);
        map.setSelected(selected);
        return;
      }
      selected = [...selected, name];
      map.setSelected(selected);
      if (selected.length < 2) {
        return;
      }
      const [a, b] = selected;
      selected = [];
      map.setSelected(selected);
      if (hasEdge(current, a, b)) {
        if (!confirmCut(`cut the edge between ${a} and ${b}?`)) {
          return;
        }
        await mutate(() => api.edit("cut", a, b));
      } else {
        await mutate(() => api.edit("join", a, b));
      }
    });
  }

  function cutEdge(a: string, b: string): void {
    enqueue(async () => {
      selected = [];
      map.setSelected(selected);
      if (!confirmCut(`cut the edge between ${a} and ${b}?`)) {
        return;
      }
      await mutate(() => api.edit("cut", a, b));
    });
  }

  function undo(): void {
    enqueue(() => mutate(() => api.undo()));
  }

  const fit = new FitPanel(fitEl, api, { onError: (m) => showToast(toasts, m) });

  for (const radio of Array.from(root.querySelectorAll<HTMLInputElement>("input[name=node-mode]"))) {
    radio.addEventListener("change", () => {
      if (radio.checked) {
        map.setNodeMode(radio.value as NodeMode);
      }
    });
  }
  (root.querySelector(".undo") as HTMLButtonElement).addEventListener("click", () => undo());

  return {
    api,
    map,
    fit,
    clickUnit,
    undo,
    setNodeMode: (mode) => map.setNodeMode(mode),
    selection: () => [...selected],
    overlayEdgeKeys: () => map.edgeKeysShown(),
    settle: () => chain,
  };
}
