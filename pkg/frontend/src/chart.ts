/** Chart model: series extraction, log-log scales, ticks, slope fit. */

import { TraceRow, logLogSlope } from './trace';

export interface SeriesPoint {
  x: number;       // dofs
  y: number;       // indicator value
  graphStep: boolean;
}

export interface Series {
  name: string;
  color: [number, number, number];
  points: SeriesPoint[];
}

export interface ChartModel {
  series: Series[];
  xDomain: [number, number] | null;  // log10 bounds
  yDomain: [number, number] | null;
  slope: number | null;              // fitted E_total vs dofs slope
  annotations: string[];
  graphSteps: number;
}

export const SERIES_SPECS: Array<{ name: 'E_pde' | 'E_ic' | 'E_A';
                                   color: [number, number, number] }> = [
  { name: 'E_pde', color: [31, 119, 180] },
  { name: 'E_ic', color: [44, 160, 44] },
  { name: 'E_A', color: [214, 39, 40] },
];

export function buildChart(rows: TraceRow[], slopeFit: boolean): ChartModel {
  const series: Series[] = SERIES_SPECS.map((spec) => ({
    name: spec.name,
    color: spec.color,
    points: rows
      .filter((row) => row.dofs > 0 && row[spec.name] > 0)
      .map((row) => ({
        x: row.dofs,
        y: row[spec.name],
        graphStep: row.kind === 'graph',
      })),
  }));

  const xs: number[] = [];
  const ys: number[] = [];
  for (const s of series) {
    for (const p of s.points) {
      xs.push(Math.log10(p.x));
      ys.push(Math.log10(p.y));
    }
  }
  const pad = (lo: number, hi: number): [number, number] =>
    lo === hi ? [lo - 0.5, hi + 0.5]
              : [lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo)];

  const annotations: string[] = [];
  let slope: number | null = null;
  if (slopeFit) {
    slope = logLogSlope(rows.map((r) => r.dofs), rows.map((r) => r.E_total));
    annotations.push(slope === null
      ? 'slope fit: not enough positive data'
      : `slope = ${slope.toFixed(2)}`);
  }
  const graphSteps = rows.filter((r) => r.kind === 'graph').length;
  if (graphSteps > 0) {
    annotations.push(`circled points = graph refinement (${graphSteps})`);
  }
  if (xs.length === 0) {
    annotations.push('no positive data to plot');
    return { series, xDomain: null, yDomain: null, slope, annotations,
             graphSteps };
  }
  return {
    series,
    xDomain: pad(Math.min(...xs), Math.max(...xs)),
    yDomain: pad(Math.min(...ys), Math.max(...ys)),
    slope,
    annotations,
    graphSteps,
  };
}

/** Decade tick positions (log10 values) covering a domain. */
export function decadeTicks([lo, hi]: [number, number], limit = 12): number[] {
  const ticks: number[] = [];
  const start = Math.ceil(lo);
  for (let d = start; d <= hi && ticks.length < limit; d++) {
    ticks.push(d);
  }
  if (ticks.length === 0) {
    ticks.push((lo + hi) / 2);
  }
  return ticks;
}

export function tickLabel(log10value: number): string {
  if (Number.isInteger(log10value)) {
    return `1e${log10value}`;
  }
  return `1e${log10value.toFixed(1)}`;
}
