import { describe, expect, it } from 'vitest';
import { TraceFormatError, logLogSlope, parseTrace } from '../src/trace';

const HEADER = 'k,n,elements,dofs,E_pde,E_ic,E_total,E_A,energy,kind,seconds';

function row(k: number, dofs: number, total: number, kind = 'mesh'): string {
  return [k, 1, 4, dofs, total * 0.8, total * 0.2, total, 0.01, 1.0, kind,
          0.5].join(',');
}

describe('parseTrace', () => {
  it('parses the documented schema', () => {
    const rows = parseTrace([HEADER, row(0, 100, 1.0), row(1, 200, 0.5,
      'graph')].join('\n'));
    expect(rows).toHaveLength(2);
    expect(rows[0].dofs).toBe(100);
    expect(rows[1].kind).toBe('graph');
    expect(rows[1].E_total).toBeCloseTo(0.5);
  });

  it('rejects a wrong header', () => {
    expect(() => parseTrace('a,b,c\n1,2,3')).toThrow(TraceFormatError);
  });

  it('reports each offending line', () => {
    const text = [HEADER, row(0, 100, 1.0), 'garbage,line',
      row(2, 300, 0.1).replace('0.1', 'oops')].join('\n');
    try {
      parseTrace(text);
      expect.unreachable();
    } catch (err) {
      const problems = (err as TraceFormatError).problems;
      expect(problems.some((p) => p.includes('line 3'))).toBe(true);
      expect(problems.some((p) => p.includes('line 4'))).toBe(true);
    }
  });

  it('rejects an unknown refinement kind', () => {
    expect(() => parseTrace([HEADER, row(0, 10, 1, 'warp')].join('\n')))
      .toThrow(/kind must be mesh or graph/);
  });
});

describe('logLogSlope', () => {
  it('recovers an exact power law', () => {
    const xs = [10, 100, 1000, 10000];
    const ys = xs.map((x) => 10 * Math.pow(x, -0.5));
    expect(logLogSlope(xs, ys)).toBeCloseTo(-0.5, 10);
  });

  it('ignores nonpositive pairs and degenerate data', () => {
    expect(logLogSlope([1, 1], [2, 3])).toBeNull();
    expect(logLogSlope([0, -1], [2, 3])).toBeNull();
    expect(logLogSlope([10, 0, 100], [1, 5, 0.1])).toBeCloseTo(-1.0, 10);
  });
});
