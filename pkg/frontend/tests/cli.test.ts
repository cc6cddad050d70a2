import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { afterEach, beforeEach, describe, expect, it } from 'vitest';
import { main, parseArgs, run } from '../src/cli';

const HEADER = 'k,n,elements,dofs,E_pde,E_ic,E_total,E_A,energy,kind,seconds';

let dir: string;

beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), 'plots-'));
});

afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function writeSyntheticTrace(file: string, count = 10): void {
  const lines = [HEADER];
  for (let k = 0; k < count; k++) {
    const dofs = 40 * Math.pow(2, k);
    const total = 10 * Math.pow(dofs, -0.5);
    lines.push([k, 1, 2 * dofs, dofs, 0.7 * total, 0.3 * total, total,
      0.01, 1.0, 'mesh', 0.1].join(','));
  }
  fs.writeFileSync(file, lines.join('\n') + '\n');
}

describe('parseArgs', () => {
  it('parses the documented invocation', () => {
    const opts = parseArgs(['trace.csv', '-o', 'fig.png', '--slope-fit']);
    expect(opts).toEqual({ input: 'trace.csv', output: 'fig.png',
      slopeFit: true, force: false });
  });

  it('rejects unknown options and missing input', () => {
    expect(() => parseArgs(['--wat'])).toThrow(/unknown option/);
    expect(() => parseArgs([])).toThrow(/usage/);
  });
});

describe('run', () => {
  it('writes a nonempty PNG and reports the fitted slope', () => {
    const input = path.join(dir, 'trace.csv');
    const output = path.join(dir, 'fig.png');
    writeSyntheticTrace(input);
    const { slope } = run({ input, output, slopeFit: true, force: false });
    expect(slope).not.toBeNull();
    expect(slope!).toBeGreaterThanOrEqual(-0.55);
    expect(slope!).toBeLessThanOrEqual(-0.45);
    const bytes = fs.readFileSync(output);
    expect(bytes.length).toBeGreaterThan(1000);
    // PNG signature
    expect(Array.from(bytes.subarray(0, 4))).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });

  it('handles the single-row all-zero trace', () => {
    const input = path.join(dir, 'trace.csv');
    const output = path.join(dir, 'fig.png');
    fs.writeFileSync(input,
      `${HEADER}\n0,1,4,15,0,0,0,0,0,mesh,0.0\n`);
    run({ input, output, slopeFit: false, force: false });
    expect(fs.readFileSync(output).length).toBeGreaterThan(0);
  });

  it('refuses to overwrite unless forced', () => {
    const input = path.join(dir, 'trace.csv');
    const output = path.join(dir, 'fig.png');
    writeSyntheticTrace(input);
    fs.writeFileSync(output, 'sentinel');
    expect(() => run({ input, output, slopeFit: false, force: false }))
      .toThrow(/already exists/);
    expect(fs.readFileSync(output, 'utf8')).toBe('sentinel');
    run({ input, output, slopeFit: false, force: true });
    expect(fs.readFileSync(output).length).toBeGreaterThan(1000);
  });

  it('does not mutate its input', () => {
    const input = path.join(dir, 'trace.csv');
    writeSyntheticTrace(input);
    const before = fs.readFileSync(input, 'utf8');
    run({ input, output: path.join(dir, 'fig.png'), slopeFit: true,
          force: false });
    expect(fs.readFileSync(input, 'utf8')).toBe(before);
  });
});

describe('main', () => {
  it('returns 1 with diagnostics for malformed CSV', () => {
    const input = path.join(dir, 'trace.csv');
    fs.writeFileSync(input, `${HEADER}\n0,1,bad-line\n`);
    const code = main([input, '-o', path.join(dir, 'fig.png')]);
    expect(code).toBe(1);
  });

  it('returns 0 on success', () => {
    const input = path.join(dir, 'trace.csv');
    writeSyntheticTrace(input);
    expect(main([input, '-o', path.join(dir, 'fig.png'), '--slope-fit']))
      .toBe(0);
  });
});
