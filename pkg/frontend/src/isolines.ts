/**
 * Marching-triangles isoline extraction on unstructured triangle grids
 * with per-vertex scalars (vertices may be duplicated across cells, which
 * keeps discontinuous fields honest: segments are computed per cell).
 */

import type { TriangleGrid } from "./vtk.js";

export type Segment = [[number, number], [number, number]];

function interpolate(
  p0: [number, number],
  p1: [number, number],
  v0: number,
  v1: number,
  level: number,
): [number, number] {
  const t = (level - v0) / (v1 - v0);
  return [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
}

export function isolineSegments(
  grid: TriangleGrid,
  scalarName: string,
  level: number,
): Segment[] {
  const values = grid.scalars[scalarName];
  if (!values) {
    throw new Error(`grid has no scalar '${scalarName}'`);
  }
  const segments: Segment[] = [];
  for (const [a, b, c] of grid.cells) {
    const idx = [a, b, c];
    const pts = idx.map((k) => grid.points[k]);
    const vals = idx.map((k) => values[k]);
    const above = vals.map((v) => v >= level);
    if (above.every(Boolean) || above.every((x) => !x)) {
      continue;
    }
    const crossings: Array<[number, number]> = [];
    for (let e = 0; e < 3; e++) {
      const e2 = (e + 1) % 3;
      if (above[e] !== above[e2] && vals[e] !== vals[e2]) {
        crossings.push(interpolate(pts[e], pts[e2], vals[e], vals[e2], level));
      }
    }
    if (crossings.length === 2) {
      segments.push([crossings[0], crossings[1]]);
    }
  }
  return segments;
}

/** Levels at which the field actually crosses somewhere on the grid. */
export function presentLevels(
  grid: TriangleGrid,
  scalarName: string,
  levels: number[],
): number[] {
  return levels.filter((lv) => isolineSegments(grid, scalarName, lv).length > 0);
}
