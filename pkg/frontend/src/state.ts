import type { FitSummary, InducedLink, NbPayload } from "./api.js";

/** Canonical undirected key for a pair of unit names. */
export function edgeKey(a: string, b: string): string {
  return a < b ? `${a}|${b}` : `${b}|${a}`;
}

/** Unique edges as name pairs, each listed once with the lower index first. */
export function edgePairs(nb: NbPayload): [string, string][] {
  const pairs: [string, string][] = [];
  nb.adj.forEach((row, i) => {
    for (const j of row) {
      if (j > i + 1) {
        pairs.push([nb.names[i], nb.names[j - 1]]);
      }
    }
  });
  return pairs;
}

export function edgeKeys(nb: NbPayload): Set<string> {
  return new Set(edgePairs(nb).map(([a, b]) => edgeKey(a, b)));
}

export function hasEdge(nb: NbPayload, a: string, b: string): boolean {
  return edgeKeys(nb).has(edgeKey(a, b));
}

/** Edge keys of the links that bridging induced, for overlay highlighting. */
export function inducedKeys(rows: InducedLink[]): Set<string> {
  return new Set(rows.map((r) => edgeKey(r.island_names, r.nb_names)));
}

/** Prediction columns in serialization order; se. twins are not mapped. */
export function predictionColumns(summary: FitSummary): string[] {
  return summary.predictions.map((p) => p.name);
}
