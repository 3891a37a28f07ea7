/**
 * Pure SVG chart construction for the utility surface and posterior panels.
 *
 * Every function maps already-gridded server data to SVG fragment strings;
 * there is no interpolation or smoothing on the client, so the rendered
 * curves are bit-consistent with the engine's CSV dumps.
 */

import type { Marginal, SurfacePayload } from "./api.js";

export interface ChartBox {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
}

export const DEFAULT_BOX: ChartBox = {
  width: 520,
  height: 260,
  margin: { top: 12, right: 12, bottom: 28, left: 46 },
};

export interface Scale {
  (value: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0;
  const fn = ((value: number) =>
    span === 0 ? (r0 + r1) / 2 : r0 + ((value - d0) / span) * (r1 - r0)) as Scale;
  fn.domain = domain;
  fn.range = range;
  return fn;
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === Infinity) return [0, 1];
  return lo === hi ? [lo - 1, hi + 1] : [lo, hi];
}

/** "M x0,y0 L x1,y1 …" polyline through (xs, ys). */
export function linePath(xs: number[], ys: number[], x: Scale, y: Scale): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    const cmd = i === 0 ? "M" : "L";
    parts.push(`${cmd}${round(x(xs[i]!))},${round(y(ys[i]!))}`);
  }
  return parts.join(" ");
}

/** Closed band polygon between mean - k*sd and mean + k*sd. */
export function bandPath(
  xs: number[],
  mean: number[],
  variance: number[],
  x: Scale,
  y: Scale,
  k = 2,
): string {
  if (xs.length === 0) return "";
  const upper: string[] = [];
  const lower: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    const sd = Math.sqrt(Math.max(variance[i]!, 0));
    upper.push(`${round(x(xs[i]!))},${round(y(mean[i]! + k * sd))}`);
    lower.unshift(`${round(x(xs[i]!))},${round(y(mean[i]! - k * sd))}`);
  }
  return `M${upper.join(" L")} L${lower.join(" L")} Z`;
}

function round(v: number): number {
  return Math.round(v * 100) / 100;
}

export interface SurfaceChart {
  box: ChartBox;
  meanPath: string;
  bandPath: string;
  markers: Array<{ cx: number; cy: number }>;
  dStar: { x: number; design: number };
  xScale: Scale;
  yScale: Scale;
}

/** Utility-surface panel: GP mean line, +/-2 sd band, evaluation markers. */
export function buildSurfaceChart(payload: SurfacePayload, box: ChartBox = DEFAULT_BOX): SurfaceChart {
  const { margin, width, height } = box;
  const sds = payload.grid_var.map((v) => Math.sqrt(Math.max(v, 0)));
  const yLo = Math.min(
    ...payload.grid_mean.map((m, i) => m - 2 * sds[i]!),
    ...payload.values,
  );
  const yHi = Math.max(
    ...payload.grid_mean.map((m, i) => m + 2 * sds[i]!),
    ...payload.values,
  );
  const x = linearScale(extent(payload.grid), [margin.left, width - margin.right]);
  const y = linearScale(
    yLo === yHi ? [yLo - 1, yHi + 1] : [yLo, yHi],
    [height - margin.bottom, margin.top],
  );
  return {
    box,
    meanPath: linePath(payload.grid, payload.grid_mean, x, y),
    bandPath: payload.grid.length > 1 ? bandPath(payload.grid, payload.grid_mean, payload.grid_var, x, y) : "",
    markers: payload.designs.map((d, i) => ({
      cx: round(x(d)),
      cy: round(y(payload.values[i]!)),
    })),
    dStar: { x: round(x(payload.d_star)), design: payload.d_star },
    xScale: x,
    yScale: y,
  };
}

export interface PosteriorChart {
  box: ChartBox;
  densityPath: string;
  priorPath: string;
  /** HPDI shading rectangle, spanning exactly the interval from the API. */
  hpdiRect: { x: number; width: number };
  hpdi: [number, number];
  truthX: number | null;
  xScale: Scale;
  yScale: Scale;
}

/** Posterior panel: KDE curve, HPDI shading, prior overlay, truth marker. */
export function buildPosteriorChart(
  marginal: Marginal,
  prior: Marginal | null,
  truth: number | null,
  box: ChartBox = DEFAULT_BOX,
): PosteriorChart {
  const { margin, width, height } = box;
  const densMax = Math.max(...marginal.density, ...(prior ? prior.density : [0]));
  const x = linearScale(extent(marginal.grid), [margin.left, width - margin.right]);
  const y = linearScale([0, densMax === 0 ? 1 : densMax], [height - margin.bottom, margin.top]);
  const [lo, hi] = marginal.hpdi;
  return {
    box,
    densityPath: linePath(marginal.grid, marginal.density, x, y),
    priorPath: prior ? linePath(prior.grid, prior.density, x, y) : "",
    hpdiRect: { x: round(x(lo)), width: round(x(hi) - x(lo)) },
    hpdi: [lo, hi],
    truthX: truth === null ? null : round(x(truth)),
    xScale: x,
    yScale: y,
  };
}

/** Axis tick positions/labels for a scale (5 evenly spaced ticks). */
export function ticks(scale: Scale, count = 5): Array<{ pos: number; label: string }> {
  const [d0, d1] = scale.domain;
  const out: Array<{ pos: number; label: string }> = [];
  for (let i = 0; i < count; i++) {
    const v = d0 + ((d1 - d0) * i) / (count - 1);
    out.push({ pos: round(scale(v)), label: v.toPrecision(3) });
  }
  return out;
}
