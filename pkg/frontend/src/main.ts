#!/usr/bin/env node
/**
 * plot --kind fig4|fig5 --in results.csv --out fig.svg [--title text]
 *
 * Exit codes: 0 rendered, 2 bad arguments or malformed CSV.
 */

import { parseKind, render } from './plot.js';
import { SchemaError } from './csv.js';

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith('--') || value === undefined) {
      throw new SchemaError(`bad argument "${flag}"`);
    }
    args.set(flag.slice(2), value);
  }
  return args;
}

export function runCli(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const kind = args.get('kind');
    const input = args.get('in');
    const output = args.get('out');
    if (!kind || !input || !output) {
      console.error('usage: plot --kind fig4|fig5 --in results.csv --out fig.svg');
      return 2;
    }
    render({
      kind: parseKind(kind),
      input,
      output,
      title: args.get('title'),
      yLabel: args.get('ylabel'),
    });
    console.log(`wrote ${output}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '');
if (invokedDirectly) {
  process.exit(runCli(process.argv.slice(2)));
}
