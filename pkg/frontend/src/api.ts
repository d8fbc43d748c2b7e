/**
 * Typed client for the neighbourhood-editing HTTP API.
 *
 * Every mutating call resolves to the full new structure as returned by the
 * server, so callers redraw from the response instead of guessing at local
 * state.
 */

export type InducedLink = {
  island_names: string;
  island_num: number;
  nb_num: number;
  nb_names: string;
};

export type NbPayload = {
  names: string[];
  /** 1-based neighbour indices, one sorted row per unit. */
  adj: number[][];
  induced: InducedLink[];
};

export type PolygonGeometry = {
  type: "Polygon" | "MultiPolygon";
  coordinates: number[][][] | number[][][][];
};

export type AreaFeature = {
  type: "Feature";
  properties: Record<string, unknown>;
  geometry: PolygonGeometry;
};

export type AreaCollection = {
  type: "FeatureCollection";
  features: AreaFeature[];
};

export type Coefficient = { name: string; estimate: number; se: number };

export type PenalizedTerm = { label: string; edf: number; lambda: number };

export type TermPrediction = {
  name: string;
  kind: string;
  group: string;
  levels: string[];
  estimate: number[];
  se: number[];
};

export type FitSummary = {
  family: string;
  formula: string;
  coefficients: Coefficient[];
  terms: PenalizedTerm[];
  deviance: number;
  null_deviance: number;
  deviance_explained: number;
  aic: number;
  scale: number;
  edf_total: number;
  iterations: number;
  converged: boolean;
  predictions: TermPrediction[];
};

export type FitStatus =
  | { state: "idle" }
  | { state: "running" }
  | { state: "done"; summary: FitSummary }
  | { state: "error"; error: string };

export type ScaleOptions = {
  low?: string;
  mid?: string;
  high?: string;
  midpoint?: number;
};

/** Error carrying the HTTP status and the server's error message. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

function toApiError(status: number, text: string): ApiError {
  let message = text;
  try {
    const parsed = JSON.parse(text) as { error?: unknown };
    if (typeof parsed.error === "string") {
      message = parsed.error;
    }
  } catch {
    // body was not JSON; keep the raw text
  }
  return new ApiError(status, message || `HTTP ${status}`);
}

/** Build the query string for the diverging-scale controls. */
export function scaleQuery(scale?: ScaleOptions): string {
  if (!scale) {
    return "";
  }
  const params = new URLSearchParams();
  if (scale.low !== undefined) params.set("low", scale.low);
  if (scale.mid !== undefined) params.set("mid", scale.mid);
  if (scale.high !== undefined) params.set("high", scale.high);
  if (scale.midpoint !== undefined) params.set("midpoint", String(scale.midpoint));
  const qs = params.toString();
  return qs ? `?${qs}` : "";
}

export class Api {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await res.text();
    if (!res.ok) {
      throw toApiError(res.status, text);
    }
    return JSON.parse(text) as T;
  }

  /** The session's polygons as a GeoJSON FeatureCollection, in unit order. */
  areas(): Promise<AreaCollection> {
    return this.request("GET", "/areas");
  }

  /** The current neighbourhood structure. */
  nb(): Promise<NbPayload> {
    return this.request("GET", "/nb");
  }

  /** The island audit: one row per induced link. */
  audit(): Promise<InducedLink[]> {
    return this.request("GET", "/nb/audit");
  }

  /** Join or cut one edge; resolves to the full edited structure. */
  edit(op: "join" | "cut", a: string, b: string): Promise<NbPayload> {
    return this.request("POST", "/edit", { op, a, b });
  }

  /** Revert the most recent edit. */
  undo(): Promise<NbPayload> {
    return this.request("POST", "/undo");
  }

  /** Rebuild the structure from scratch, discarding the edit history. */
  bridges(k: number, remove = false): Promise<NbPayload> {
    return this.request("POST", "/bridges", { k, remove });
  }

  /** Run a fit; resolves with the summary once the server finishes. */
  submitFit(formula: string, family: "gaussian" | "poisson"): Promise<FitSummary> {
    return this.request("POST", "/fit", { formula, family });
  }

  /** Poll the state of the fit worker. */
  fitStatus(): Promise<FitStatus> {
    return this.request("GET", "/fit/status");
  }

  /** Persist the current structure server-side. */
  save(path?: string): Promise<{ path: string }> {
    return this.request("POST", "/save", path === undefined ? {} : { path });
  }

  /** Fetch one server-rendered choropleth as SVG text. */
  async predictionSvg(column: string, scale?: ScaleOptions): Promise<string> {
    const url = `${this.baseUrl}/render/preds/${encodeURIComponent(column)}.svg${scaleQuery(scale)}`;
    const res = await fetch(url);
    const text = await res.text();
    if (!res.ok) {
      throw toApiError(res.status, text);
    }
    return text;
  }
}
