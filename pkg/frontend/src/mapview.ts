import type { AreaCollection, NbPayload } from "./api.js";
import {
  geometryBounds,
  geometryCentroid,
  outerRings,
  ringToPath,
  unionBounds,
  type Pt,
} from "./geometry.js";
import { edgeKey, edgePairs, inducedKeys } from "./state.js";

export type NodeMode = "point" | "numeric";

export type MapViewOptions = {
  onUnitClick?: (name: string) => void;
  onEdgeClick?: (a: string, b: string) => void;
};

const SVG_NS = "http://www.w3.org/2000/svg";

const UNIT_FILL = "#e8e4da";
const SELECTED_FILL = "#f2c14e";
const EDGE_STROKE = "#2c6fb3";
const INDUCED_STROKE = "#d9730d";

/**
 * The interactive map pane: unit polygons plus the neighbourhood overlay.
 *
 * The overlay is only ever drawn from a structure payload handed to
 * syncOverlay — there is no client-side mutation of edges.
 */
export class MapView {
  readonly svg: SVGSVGElement;

  private readonly names: string[];
  private readonly centroids = new Map<string, Pt>();
  private readonly unitPaths = new Map<string, SVGPathElement>();
  private readonly edgeGroup: SVGGElement;
  private readonly nodeGroup: SVGGElement;
  private readonly extent: number;
  private nodeMode: NodeMode = "point";
  private lastNb: NbPayload | null = null;

  constructor(
    container: HTMLElement,
    areas: AreaCollection,
    names: string[],
    opts: MapViewOptions = {},
  ) {
    if (areas.features.length !== names.length) {
      throw new Error(
        `collection has ${areas.features.length} features but the structure names ${names.length} units`,
      );
    }
    this.names = [...names];

    const bounds = unionBounds(areas.features.map((f) => geometryBounds(f.geometry)));
    const [minx, miny, maxx, maxy] = bounds;
    const w = maxx - minx;
    const h = maxy - miny;
    this.extent = Math.max(w, h) || 1;
    const m = this.extent * 0.03;

    this.svg = document.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("viewBox", `${minx - m} ${-maxy - m} ${w + 2 * m} ${h + 2 * m}`);
    this.svg.setAttribute("class", "nb-map");

    const unitGroup = document.createElementNS(SVG_NS, "g") as SVGGElement;
    unitGroup.setAttribute("class", "units");
    areas.features.forEach((feature, i) => {
      const name = this.names[i];
      const d = outerRings(feature.geometry).map(ringToPath).join(" ");
      const path = document.createElementNS(SVG_NS, "path") as SVGPathElement;
      path.setAttribute("d", d);
      path.setAttribute("class", "unit");
      path.setAttribute("data-name", name);
      path.setAttribute("fill", UNIT_FILL);
      path.setAttribute("stroke", "#6b6b6b");
      path.setAttribute("stroke-width", String(this.extent * 0.0025));
      path.setAttribute("fill-rule", "evenodd");
      path.setAttribute("style", "cursor:pointer");
      path.addEventListener("click", () => opts.onUnitClick?.(name));
      unitGroup.appendChild(path);
      this.unitPaths.set(name, path);
      this.centroids.set(name, geometryCentroid(feature.geometry));
    });
    this.svg.appendChild(unitGroup);

    this.edgeGroup = document.createElementNS(SVG_NS, "g") as SVGGElement;
    this.edgeGroup.setAttribute("class", "edges");
    this.svg.appendChild(this.edgeGroup);

    this.nodeGroup = document.createElementNS(SVG_NS, "g") as SVGGElement;
    this.nodeGroup.setAttribute("class", "nodes");
    this.svg.appendChild(this.nodeGroup);

    this.onEdgeClick = opts.onEdgeClick;
    container.appendChild(this.svg);
  }

  private readonly onEdgeClick?: (a: string, b: string) => void;

  /** Redraw the edge overlay and nodes from a server structure payload. */
  syncOverlay(nb: NbPayload): void {
    this.lastNb = nb;
    this.edgeGroup.textContent = "";
    const induced = inducedKeys(nb.induced);
    for (const [a, b] of edgePairs(nb)) {
      const [x1, y1] = this.centroids.get(a) ?? [0, 0];
      const [x2, y2] = this.centroids.get(b) ?? [0, 0];
      const line = document.createElementNS(SVG_NS, "line") as SVGLineElement;
      line.setAttribute("x1", String(x1));
      line.setAttribute("y1", String(-y1));
      line.setAttribute("x2", String(x2));
      line.setAttribute("y2", String(-y2));
      line.setAttribute("data-a", a);
      line.setAttribute("data-b", b);
      const isInduced = induced.has(edgeKey(a, b));
      line.setAttribute("class", isInduced ? "edge induced" : "edge");
      line.setAttribute("stroke", isInduced ? INDUCED_STROKE : EDGE_STROKE);
      line.setAttribute("stroke-width", String(this.extent * 0.008));
      line.setAttribute("style", "cursor:pointer");
      line.addEventListener("click", () => this.onEdgeClick?.(a, b));
      this.edgeGroup.appendChild(line);
    }
    this.renderNodes();
  }

  setNodeMode(mode: NodeMode): void {
    this.nodeMode = mode;
    this.renderNodes();
  }

  private renderNodes(): void {
    this.nodeGroup.textContent = "";
    if (this.lastNb === null) {
      return;
    }
    this.names.forEach((name, i) => {
      const [cx, cy] = this.centroids.get(name) ?? [0, 0];
      if (this.nodeMode === "point") {
        const dot = document.createElementNS(SVG_NS, "circle");
        dot.setAttribute("cx", String(cx));
        dot.setAttribute("cy", String(-cy));
        dot.setAttribute("r", String(this.extent * 0.012));
        dot.setAttribute("class", "node");
        dot.setAttribute("fill", "#1a1a1a");
        this.nodeGroup.appendChild(dot);
      } else {
        const label = document.createElementNS(SVG_NS, "text");
        label.setAttribute("x", String(cx));
        label.setAttribute("y", String(-cy));
        label.setAttribute("class", "node-label");
        label.setAttribute("font-size", String(this.extent * 0.035));
        label.setAttribute("font-family", "sans-serif");
        label.setAttribute("text-anchor", "middle");
        label.setAttribute("dominant-baseline", "central");
        label.setAttribute("fill", "#1a1a1a");
        label.textContent = String(i + 1);
        this.nodeGroup.appendChild(label);
      }
    });
  }

  setSelected(selected: string[]): void {
    for (const [name, path] of this.unitPaths) {
      const on = selected.includes(name);
      path.setAttribute("class", on ? "unit selected" : "unit");
      path.setAttribute("fill", on ? SELECTED_FILL : UNIT_FILL);
    }
  }

  /** Edge keys currently drawn, read back from the DOM. */
  edgeKeysShown(): Set<string> {
    const keys = new Set<string>();
    for (const line of Array.from(this.edgeGroup.querySelectorAll("line"))) {
      const a = line.getAttribute("data-a");
      const b = line.getAttribute("data-b");
      if (a !== null && b !== null) {
        keys.add(edgeKey(a, b));
      }
    }
    return keys;
  }
}
