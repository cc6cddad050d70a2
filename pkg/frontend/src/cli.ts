#!/usr/bin/env node
/**
 * plot-history: render the convergence history of a solver trace.
 *
 * Usage:  plot-history trace.csv -o figure.png [--slope-fit] [--force]
 *
 * Reads only the public trace.csv contract; refuses to overwrite an
 * existing output file unless --force is given. Exit codes: 0 success,
 * 1 usage or input errors.
 */

import * as fs from 'fs';
import { buildChart } from './chart';
import { renderChart } from './render';
import { TraceFormatError, readTrace } from './trace';

export interface CliOptions {
  input: string;
  output: string;
  slopeFit: boolean;
  force: boolean;
}

export function parseArgs(argv: string[]): CliOptions {
  let input: string | null = null;
  let output = 'figure.png';
  let slopeFit = false;
  let force = false;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === '-o' || arg === '--output') {
      output = argv[++i];
      if (output === undefined) throw new Error('missing value after -o');
    } else if (arg === '--slope-fit') {
      slopeFit = true;
    } else if (arg === '--force') {
      force = true;
    } else if (arg.startsWith('-')) {
      throw new Error(`unknown option ${arg}`);
    } else if (input === null) {
      input = arg;
    } else {
      throw new Error(`unexpected argument ${arg}`);
    }
  }
  if (input === null) {
    throw new Error('usage: plot-history trace.csv -o figure.png ' +
      '[--slope-fit] [--force]');
  }
  return { input, output, slopeFit, force };
}

export function run(options: CliOptions): { slope: number | null } {
  if (fs.existsSync(options.output) && !options.force) {
    throw new Error(
      `output ${options.output} already exists (use --force to overwrite)`);
  }
  const rows = readTrace(options.input);
  const model = buildChart(rows, options.slopeFit);
  fs.writeFileSync(options.output, renderChart(model));
  return { slope: model.slope };
}

export function main(argv: string[]): number {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  try {
    const { slope } = run(options);
    if (options.slopeFit) {
      console.log(slope === null
        ? 'slope fit: not enough positive data'
        : `fitted log-log slope of E_total vs dofs: ${slope.toFixed(4)}`);
    }
    console.log(`wrote ${options.output}`);
    return 0;
  } catch (err) {
    if (err instanceof TraceFormatError) {
      console.error('malformed trace:');
      for (const problem of err.problems) {
        console.error(`  ${problem}`);
      }
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
