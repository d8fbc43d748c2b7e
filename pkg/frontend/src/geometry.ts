import type { PolygonGeometry } from "./api.js";

export type Pt = [number, number];
export type Ring = Pt[];
export type Bounds = [number, number, number, number];

function openRing(ring: Ring): Ring {
  if (ring.length > 1) {
    const [fx, fy] = ring[0];
    const [lx, ly] = ring[ring.length - 1];
    if (fx === lx && fy === ly) {
      return ring.slice(0, -1);
    }
  }
  return ring;
}

/** Signed shoelace area; positive for counter-clockwise rings. */
export function ringArea(ring: Ring): number {
  const pts = openRing(ring);
  let s = 0;
  for (let i = 0; i < pts.length; i++) {
    const [x0, y0] = pts[i];
    const [x1, y1] = pts[(i + 1) % pts.length];
    s += x0 * y1 - x1 * y0;
  }
  return s / 2;
}

/** Area-weighted centroid; falls back to the vertex mean for slivers. */
export function ringCentroid(ring: Ring): Pt {
  const pts = openRing(ring);
  const a = ringArea(ring);
  if (Math.abs(a) < 1e-12) {
    let sx = 0;
    let sy = 0;
    for (const [x, y] of pts) {
      sx += x;
      sy += y;
    }
    return [sx / pts.length, sy / pts.length];
  }
  let cx = 0;
  let cy = 0;
  for (let i = 0; i < pts.length; i++) {
    const [x0, y0] = pts[i];
    const [x1, y1] = pts[(i + 1) % pts.length];
    const cross = x0 * y1 - x1 * y0;
    cx += (x0 + x1) * cross;
    cy += (y0 + y1) * cross;
  }
  return [cx / (6 * a), cy / (6 * a)];
}

/** Outer ring of each polygon part (holes are ignored for display). */
export function outerRings(geometry: PolygonGeometry): Ring[] {
  if (geometry.type === "Polygon") {
    const coords = geometry.coordinates as number[][][];
    return [coords[0].map((p) => [p[0], p[1]] as Pt)];
  }
  const coords = geometry.coordinates as number[][][][];
  return coords.map((poly) => poly[0].map((p) => [p[0], p[1]] as Pt));
}

export function geometryCentroid(geometry: PolygonGeometry): Pt {
  const rings = outerRings(geometry);
  let w = 0;
  let sx = 0;
  let sy = 0;
  for (const ring of rings) {
    const a = Math.abs(ringArea(ring));
    const [cx, cy] = ringCentroid(ring);
    w += a;
    sx += a * cx;
    sy += a * cy;
  }
  if (w === 0) {
    return ringCentroid(rings[0]);
  }
  return [sx / w, sy / w];
}

export function geometryBounds(geometry: PolygonGeometry): Bounds {
  let minx = Infinity;
  let miny = Infinity;
  let maxx = -Infinity;
  let maxy = -Infinity;
  for (const ring of outerRings(geometry)) {
    for (const [x, y] of ring) {
      if (x < minx) minx = x;
      if (y < miny) miny = y;
      if (x > maxx) maxx = x;
      if (y > maxy) maxy = y;
    }
  }
  return [minx, miny, maxx, maxy];
}

export function unionBounds(list: Bounds[]): Bounds {
  return [
    Math.min(...list.map((b) => b[0])),
    Math.min(...list.map((b) => b[1])),
    Math.max(...list.map((b) => b[2])),
    Math.max(...list.map((b) => b[3])),
  ];
}

const coord = (v: number): string => String(Math.round(v * 1e6) / 1e6);

/** SVG path data for one ring; y is negated so the SVG y axis points north. */
export function ringToPath(ring: Ring): string {
  const pts = openRing(ring);
  const parts = pts.map(([x, y], i) => `${i === 0 ? "M" : "L"} ${coord(x)},${coord(-y)}`);
  return `${parts.join(" ")} Z`;
}
