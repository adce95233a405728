import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { renderChart } from '../src/chart.js';
import { parseCsv } from '../src/csv.js';
import { parseKind, render } from '../src/plot.js';
import { runCli } from '../src/main.js';

const FIG4_PATH = new URL('../examples/fig4.csv', import.meta.url).pathname;
const FIG5_PATH = new URL('../examples/fig5.csv', import.meta.url).pathname;
const FIG4 = readFileSync(FIG4_PATH, 'utf8');
const FIG5 = readFileSync(FIG5_PATH, 'utf8');

function valueLabels(svg: string): string[] {
  return [...svg.matchAll(/class="value"[^>]*>([^<]*)</g)].map((m) => m[1]);
}

function barHeights(svg: string): number[] {
  return [...svg.matchAll(/class="bar"[^>]*height="([0-9.]+)"/g)].map((m) =>
    Number(m[1]),
  );
}

describe('renderChart', () => {
  it('draws one labelled bar per handshake row', () => {
    const rows = parseCsv(FIG4);
    const svg = renderChart('handshake', rows);
    expect((svg.match(/class="bar"/g) ?? []).length).toBe(4);
    expect(valueLabels(svg)).toEqual(rows.map((r) => r.handshakeMsText));
  });

  it('keeps preset bar order with the cached variant shortest', () => {
    const rows = parseCsv(FIG4);
    const heights = barHeights(renderChart('handshake', rows));
    expect(heights).toHaveLength(4);
    // file order: vanilla, keyless, dane-uncached, dane-cached
    expect(Math.max(...heights)).toBe(heights[0]);
    expect(Math.min(...heights)).toBe(heights[3]);
  });

  it('groups page-view bars per variant and series', () => {
    const rows = parseCsv(FIG5);
    const svg = renderChart('pageload', rows);
    expect((svg.match(/class="bar"/g) ?? []).length).toBe(8);
    expect((svg.match(/class="group"/g) ?? []).length).toBe(4);
    expect(valueLabels(svg)).toEqual(rows.map((r) => r.pageLoadMsText));
    // legend for the two series
    expect(svg).toContain('>direct<');
    expect(svg).toContain('>ece<');
  });

  it('is deterministic: same rows, identical bytes', () => {
    const rows = parseCsv(FIG5);
    expect(renderChart('pageload', rows)).toBe(renderChart('pageload', rows));
  });
});

describe('render + CLI', () => {
  it('renders both shipped examples without error', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    for (const [kind, input] of [
      ['fig4', FIG4_PATH],
      ['fig5', FIG5_PATH],
    ] as const) {
      const output = join(dir, `${kind}.svg`);
      render({ kind: parseKind(kind), input, output });
      const svg = readFileSync(output, 'utf8');
      expect(svg.startsWith('<svg')).toBe(true);
      expect(svg).toContain('</svg>');
    }
  });

  it('bar label texts equal the CSV values end to end', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    const output = join(dir, 'fig4.svg');
    expect(runCli(['--kind', 'fig4', '--in', FIG4_PATH, '--out', output])).toBe(0);
    const svg = readFileSync(output, 'utf8');
    const csvValues = parseCsv(FIG4).map((r) => r.handshakeMsText);
    expect(valueLabels(svg)).toEqual(csvValues);
  });

  it('unknown kind and empty csv exit with code 2', () => {
    const dir = mkdtempSync(join(tmpdir(), 'plots-'));
    expect(
      runCli(['--kind', 'fig9', '--in', FIG4_PATH, '--out', join(dir, 'x.svg')]),
    ).toBe(2);
    const empty = join(dir, 'empty.csv');
    writeFileSync(empty, '');
    expect(
      runCli(['--kind', 'fig4', '--in', empty, '--out', join(dir, 'y.svg')]),
    ).toBe(2);
  });

  it('missing arguments exit with code 2', () => {
    expect(runCli(['--kind', 'fig4'])).toBe(2);
  });
});
