/** File-level entry: read a result CSV, write the rendered SVG. */

import { readFileSync, writeFileSync } from 'node:fs';

import { FigureKind, renderChart } from './chart.js';
import { parseCsv, SchemaError } from './csv.js';

export interface PlotSpec {
  input: string;
  kind: FigureKind;
  output: string;
  title?: string;
  yLabel?: string;
}

/** Figure-kind aliases accepted on the command line. */
export function parseKind(token: string): FigureKind {
  switch (token) {
    case 'fig4':
    case 'handshake':
      return 'handshake';
    case 'fig5':
    case 'pageload':
      return 'pageload';
    default:
      throw new SchemaError(`unknown figure kind "${token}" (use fig4 or fig5)`);
  }
}

export function render(spec: PlotSpec): void {
  let text: string;
  try {
    text = readFileSync(spec.input, 'utf8');
  } catch (err) {
    throw new SchemaError(`cannot read ${spec.input}: ${(err as Error).message}`);
  }
  const rows = parseCsv(text);
  const svg = renderChart(spec.kind, rows, {
    title: spec.title,
    yLabel: spec.yLabel,
  });
  writeFileSync(spec.output, svg);
}
