/**
 * Figure renderers for the four output kinds: log-log mesh convergence,
 * semilog degree convergence, mean/max trajectories, and field heatmaps
 * with isolines. Each renderer returns the SVG plus the quantitative
 * annotations it drew, so callers (and tests) can cross-check them against
 * the solver's own diagnostics.
 */

import { CsvTable, column, parseCsv, readErrorSweep } from "./csv.js";
import { isolineSegments, presentLevels } from "./isolines.js";
import { leastSquaresOrder, observedOrders, semilogSlope } from "./orders.js";
import {
  CURVE_COLORS,
  SvgScene,
  heatColor,
  linearScale,
  linearTicks,
  logScale,
  logTicks,
} from "./svg.js";
import type { TriangleGrid } from "./vtk.js";

export interface RenderResult {
  svg: string;
  annotations: Record<string, number>;
  curves: number;
}

const W = 640;
const H = 480;
const MARGIN = { left: 70, right: 20, top: 30, bottom: 50 };

function frame(scene: SvgScene, title: string): void {
  scene.line(MARGIN.left, H - MARGIN.bottom, W - MARGIN.right, H - MARGIN.bottom, "#000");
  scene.line(MARGIN.left, MARGIN.top, MARGIN.left, H - MARGIN.bottom, "#000");
  scene.text(W / 2, 18, title, 13, "middle");
}

/** Log-log convergence plot with per-quantity order annotations. */
export function renderHConv(csvText: string, title = "mesh convergence"): RenderResult {
  const sweep = readErrorSweep(csvText);
  const names = Object.keys(sweep.quantities);
  if (names.length === 0) throw new Error("errors CSV has no error columns");
  const allErrors = names.flatMap((n) => sweep.quantities[n]);
  const xlo = Math.min(...sweep.h);
  const xhi = Math.max(...sweep.h);
  const ylo = Math.min(...allErrors);
  const yhi = Math.max(...allErrors);
  const sx = logScale(xlo, xhi, MARGIN.left, W - MARGIN.right);
  const sy = logScale(ylo, yhi, H - MARGIN.bottom, MARGIN.top);

  const scene = new SvgScene(W, H);
  frame(scene, title);
  for (const t of logTicks(xlo, xhi)) {
    scene.line(sx(t), H - MARGIN.bottom, sx(t), H - MARGIN.bottom + 5, "#000");
    scene.text(sx(t), H - MARGIN.bottom + 18, t.toExponential(0), 10, "middle");
  }
  for (const t of logTicks(ylo, yhi)) {
    scene.line(MARGIN.left - 5, sy(t), MARGIN.left, sy(t), "#000");
    scene.text(MARGIN.left - 8, sy(t) + 3, t.toExponential(0), 10, "end");
  }
  scene.text(W / 2, H - 10, "h", 12, "middle");

  const annotations: Record<string, number> = {};
  names.forEach((name, k) => {
    const errs = sweep.quantities[name];
    const pts = sweep.h.map(
      (h, i) => [sx(h), sy(errs[i])] as [number, number],
    );
    const color = CURVE_COLORS[k % CURVE_COLORS.length];
    scene.polyline(pts, color, 2);
    pts.forEach(([x, y]) => scene.circle(x, y, 3, color));
    const slope = leastSquaresOrder(sweep.h, errs);
    const pair = observedOrders(sweep.h, errs);
    annotations[`slope_${name}`] = slope;
    annotations[`order_${name}`] = pair[pair.length - 1];
    scene.text(
      pts[pts.length - 1][0] + 6,
      pts[pts.length - 1][1],
      `${name}: slope ${slope.toFixed(2)}`,
      11,
    );
    // reference order triangle under the last segment
    const [x0, y0] = pts[pts.length - 2];
    const [x1, y1] = pts[pts.length - 1];
    scene.polyline(
      [
        [x0, y0],
        [x0, y1],
        [x1, y1],
      ],
      "#999",
      1,
      "4 3",
    );
  });
  return { svg: scene.render(), annotations, curves: names.length };
}

/** Semilog degree-convergence plot. */
export function renderPConv(csvText: string, title = "degree convergence"): RenderResult {
  const table = parseCsv(csvText);
  const ell = column(table, "ell");
  const names = ["E_p", "E_q", "E_sigp", "E_sigq"].filter((n) =>
    table.columns.includes(n),
  );
  const allErrors = names.flatMap((n) => column(table, n));
  const sx = linearScale(Math.min(...ell), Math.max(...ell), MARGIN.left, W - MARGIN.right);
  const sy = logScale(
    Math.min(...allErrors),
    Math.max(...allErrors),
    H - MARGIN.bottom,
    MARGIN.top,
  );
  const scene = new SvgScene(W, H);
  frame(scene, title);
  for (const t of ell) {
    scene.line(sx(t), H - MARGIN.bottom, sx(t), H - MARGIN.bottom + 5, "#000");
    scene.text(sx(t), H - MARGIN.bottom + 18, String(t), 10, "middle");
  }
  scene.text(W / 2, H - 10, "polynomial degree", 12, "middle");

  const annotations: Record<string, number> = {};
  names.forEach((name, k) => {
    const errs = column(table, name);
    const pts = ell.map((l, i) => [sx(l), sy(errs[i])] as [number, number]);
    const color = CURVE_COLORS[k % CURVE_COLORS.length];
    scene.polyline(pts, color, 2);
    pts.forEach(([x, y]) => scene.circle(x, y, 3, color));
    annotations[`decay_${name}`] = semilogSlope(ell, errs);
    scene.text(pts[pts.length - 1][0] + 6, pts[pts.length - 1][1], name, 11);
  });
  return { svg: scene.render(), annotations, curves: names.length };
}

/** Mean/max concentration trajectories with equilibrium guides. */
export function renderTrajectory(
  csvText: string,
  equilibrium?: { p: number; q: number },
  title = "mean concentrations",
): RenderResult {
  const table = parseCsv(csvText);
  const t = column(table, "t");
  const series = ["mean_p", "mean_q", "max_q"].filter((n) =>
    table.columns.includes(n),
  );
  const values = series.flatMap((n) => column(table, n));
  const lo = Math.min(...values, equilibrium ? equilibrium.p : Infinity);
  const hi = Math.max(...values, equilibrium ? equilibrium.q : -Infinity);
  const sx = linearScale(t[0], t[t.length - 1], MARGIN.left, W - MARGIN.right);
  const sy = linearScale(lo, hi * 1.05, H - MARGIN.bottom, MARGIN.top);
  const scene = new SvgScene(W, H);
  frame(scene, title);
  for (const tick of linearTicks(t[0], t[t.length - 1])) {
    scene.line(sx(tick), H - MARGIN.bottom, sx(tick), H - MARGIN.bottom + 5, "#000");
    scene.text(sx(tick), H - MARGIN.bottom + 18, String(tick), 10, "middle");
  }
  for (const tick of linearTicks(lo, hi * 1.05)) {
    scene.line(MARGIN.left - 5, sy(tick), MARGIN.left, sy(tick), "#000");
    scene.text(MARGIN.left - 8, sy(tick) + 3, tick.toPrecision(3), 10, "end");
  }
  scene.text(W / 2, H - 10, "t", 12, "middle");

  series.forEach((name, k) => {
    const vals = column(table, name);
    const pts = t.map((ti, i) => [sx(ti), sy(vals[i])] as [number, number]);
    scene.polyline(pts, CURVE_COLORS[k % CURVE_COLORS.length], 1.8);
    scene.text(pts[pts.length - 1][0] - 40, pts[pts.length - 1][1] - 4, name, 10);
  });
  const annotations: Record<string, number> = {};
  if (equilibrium) {
    for (const [name, level] of [["p", equilibrium.p], ["q", equilibrium.q]] as const) {
      scene.line(sx(t[0]), sy(level), sx(t[t.length - 1]), sy(level), "#888", 1);
      annotations[`equilibrium_${name}`] = level;
    }
  }
  return { svg: scene.render(), annotations, curves: series.length };
}

export interface FieldRenderResult extends RenderResult {
  isolineLevels: number[];
}

/** Triangle heatmap plus isolines; the equilibrium level is thickened. */
export function renderField(
  grid: TriangleGrid,
  scalarName: string,
  levels: number[] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
  equilibriumLevel = 0.9,
  title = "field",
): FieldRenderResult {
  const values = grid.scalars[scalarName];
  if (!values) throw new Error(`grid has no scalar '${scalarName}'`);
  const xs = grid.points.map((p) => p[0]);
  const ys = grid.points.map((p) => p[1]);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const sx = linearScale(Math.min(...xs), Math.max(...xs), MARGIN.left, W - MARGIN.right);
  const sy = linearScale(Math.min(...ys), Math.max(...ys), H - MARGIN.bottom, MARGIN.top);
  const scene = new SvgScene(W, H);
  scene.text(W / 2, 18, `${title} (${scalarName}), range [${lo.toPrecision(3)}, ${hi.toPrecision(3)}]`, 13, "middle");

  const span = hi - lo || 1;
  for (const [a, b, c] of grid.cells) {
    const mean = (values[a] + values[b] + values[c]) / 3;
    const pts = [a, b, c].map(
      (k) => [sx(grid.points[k][0]), sy(grid.points[k][1])] as [number, number],
    );
    scene.polygon(pts, heatColor((mean - lo) / span));
  }

  const present = presentLevels(grid, scalarName, levels);
  for (const level of present) {
    const segs = isolineSegments(grid, scalarName, level);
    const widthPx = Math.abs(level - equilibriumLevel) < 1e-12 ? 2.6 : 1.0;
    for (const [[x0, y0], [x1, y1]] of segs) {
      scene.line(sx(x0), sy(y0), sx(x1), sy(y1), "#111", widthPx);
    }
  }
  const annotations: Record<string, number> = {
    min: lo,
    max: hi,
    isolines: present.length,
  };
  return {
    svg: scene.render(),
    annotations,
    curves: grid.cells.length,
    isolineLevels: present,
  };
}
