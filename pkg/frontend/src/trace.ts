/** Parsing and validation of the trace.csv contract emitted by the solver. */

import * as fs from 'fs';

export const EXPECTED_COLUMNS = [
  'k', 'n', 'elements', 'dofs', 'E_pde', 'E_ic', 'E_total', 'E_A',
  'energy', 'kind', 'seconds',
] as const;

export interface TraceRow {
  k: number;
  n: number;
  elements: number;
  dofs: number;
  E_pde: number;
  E_ic: number;
  E_total: number;
  E_A: number;
  energy: number;
  kind: 'mesh' | 'graph';
  seconds: number;
}

export class TraceFormatError extends Error {
  constructor(public readonly problems: string[]) {
    super(problems.join('\n'));
  }
}

const NUMERIC = EXPECTED_COLUMNS.filter((c) => c !== 'kind');

export function parseTrace(text: string): TraceRow[] {
  const problems: string[] = [];
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new TraceFormatError(['empty trace file']);
  }
  const header = lines[0].split(',');
  if (header.join(',') !== EXPECTED_COLUMNS.join(',')) {
    throw new TraceFormatError([
      `line 1: header must be "${EXPECTED_COLUMNS.join(',')}", ` +
      `got "${lines[0]}"`,
    ]);
  }
  const rows: TraceRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(',');
    if (parts.length !== EXPECTED_COLUMNS.length) {
      problems.push(`line ${i + 1}: expected ${EXPECTED_COLUMNS.length} ` +
        `fields, got ${parts.length}: "${lines[i]}"`);
      continue;
    }
    const row: Record<string, number | string> = {};
    EXPECTED_COLUMNS.forEach((name, j) => {
      row[name] = name === 'kind' ? parts[j] : Number(parts[j]);
    });
    for (const name of NUMERIC) {
      const value = row[name] as number;
      if (!Number.isFinite(value)) {
        problems.push(`line ${i + 1}: column ${name} is not a finite ` +
          `number: "${parts[EXPECTED_COLUMNS.indexOf(name)]}"`);
      }
    }
    if (row.kind !== 'mesh' && row.kind !== 'graph') {
      problems.push(`line ${i + 1}: kind must be mesh or graph, got ` +
        `"${row.kind}"`);
    }
    if (problems.length === 0) {
      rows.push(row as unknown as TraceRow);
    }
  }
  if (problems.length > 0) {
    throw new TraceFormatError(problems);
  }
  return rows;
}

export function readTrace(path: string): TraceRow[] {
  return parseTrace(fs.readFileSync(path, 'utf8'));
}

/** Least-squares slope of log10(y) against log10(x) over positive pairs. */
export function logLogSlope(xs: number[], ys: number[]): number | null {
  const px: number[] = [];
  const py: number[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (xs[i] > 0 && ys[i] > 0) {
      px.push(Math.log10(xs[i]));
      py.push(Math.log10(ys[i]));
    }
  }
  if (px.length < 2) return null;
  const n = px.length;
  const mx = px.reduce((a, b) => a + b, 0) / n;
  const my = py.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (px[i] - mx) * (px[i] - mx);
    sxy += (px[i] - mx) * (py[i] - my);
  }
  if (sxx === 0) return null;
  return sxy / sxx;
}
