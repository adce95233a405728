/**
 * Deterministic SVG bar charts from result rows.
 *
 * Rendering is pure string assembly with fixed geometry and fonts: the same
 * rows always yield the identical SVG document.  Every bar carries a value
 * label whose text is the CSV cell verbatim.
 */

import { MetricsRow, SchemaError } from './csv.js';

export type FigureKind = 'handshake' | 'pageload';

export interface ChartOptions {
  title?: string;
  yLabel?: string;
}

interface Bar {
  group: string;
  series: string;
  value: number;
  label: string;
}

const WIDTH = 720;
const HEIGHT = 420;
const MARGIN = { top: 48, right: 24, bottom: 72, left: 72 };
const SERIES_COLORS: Record<string, string> = {
  direct: '#c0504d',
  ece: '#4f81bd',
  '': '#4f81bd',
};
const FALLBACK_COLORS = ['#4f81bd', '#c0504d', '#9bbb59', '#8064a2'];

function bars(kind: FigureKind, rows: MetricsRow[]): Bar[] {
  if (kind === 'handshake') {
    return rows.map((row) => ({
      group: row.variant,
      series: '',
      value: row.handshakeMs,
      label: row.handshakeMsText,
    }));
  }
  return rows.map((row) => {
    const slash = row.variant.indexOf('/');
    const group = slash === -1 ? row.variant : row.variant.slice(0, slash);
    const series = slash === -1 ? '' : row.variant.slice(slash + 1);
    return { group, series, value: row.pageLoadMs, label: row.pageLoadMsText };
  });
}

function unique<T>(values: T[]): T[] {
  return [...new Set(values)];
}

function niceCeiling(value: number): number {
  if (value <= 0) return 1;
  const magnitude = 10 ** Math.floor(Math.log10(value));
  for (const step of [1, 2, 2.5, 5, 10]) {
    if (value <= step * magnitude) return step * magnitude;
  }
  return 10 * magnitude;
}

function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Render a grouped bar chart; bar order follows row order in the CSV. */
export function renderChart(
  kind: FigureKind,
  rows: MetricsRow[],
  options: ChartOptions = {},
): string {
  if (rows.length === 0) {
    throw new SchemaError('no rows to plot');
  }
  const data = bars(kind, rows);
  const groups = unique(data.map((b) => b.group));
  const seriesNames = unique(data.map((b) => b.series));
  const yMax = niceCeiling(Math.max(...data.map((b) => b.value)));

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const groupW = plotW / groups.length;
  const barW = Math.min(64, (groupW * 0.72) / seriesNames.length);

  const y = (value: number) => MARGIN.top + plotH * (1 - value / yMax);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`,
  );
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);

  const title =
    options.title ??
    (kind === 'handshake'
      ? 'Handshake completion time'
      : 'Page view time: cache vs direct');
  parts.push(
    `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${esc(title)}</text>`,
  );

  const yLabel = options.yLabel ?? 'milliseconds';
  parts.push(
    `<text x="18" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-size="12" ` +
      `transform="rotate(-90 18 ${MARGIN.top + plotH / 2})">${esc(yLabel)}</text>`,
  );

  // horizontal gridlines at quarters
  for (let i = 0; i <= 4; i++) {
    const value = (yMax * i) / 4;
    const gy = y(value);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${gy}" x2="${WIDTH - MARGIN.right}" y2="${gy}" ` +
        `stroke="#dddddd" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${MARGIN.left - 8}" y="${gy + 4}" text-anchor="end" font-size="11">` +
        `${value}</text>`,
    );
  }

  data.forEach((bar) => {
    const gi = groups.indexOf(bar.group);
    const si = seriesNames.indexOf(bar.series);
    const groupLeft = MARGIN.left + gi * groupW;
    const inner = seriesNames.length * barW;
    const x = groupLeft + (groupW - inner) / 2 + si * barW;
    const top = y(bar.value);
    const color =
      SERIES_COLORS[bar.series] ?? FALLBACK_COLORS[si % FALLBACK_COLORS.length];
    parts.push(
      `<rect class="bar" x="${x.toFixed(2)}" y="${top.toFixed(2)}" ` +
        `width="${(barW - 4).toFixed(2)}" height="${(MARGIN.top + plotH - top).toFixed(2)}" ` +
        `fill="${color}"/>`,
    );
    parts.push(
      `<text class="value" x="${(x + (barW - 4) / 2).toFixed(2)}" ` +
        `y="${(top - 5).toFixed(2)}" text-anchor="middle" font-size="11">` +
        `${esc(bar.label)}</text>`,
    );
  });

  groups.forEach((group, gi) => {
    const cx = MARGIN.left + gi * groupW + groupW / 2;
    parts.push(
      `<text class="group" x="${cx.toFixed(2)}" y="${MARGIN.top + plotH + 18}" ` +
        `text-anchor="middle" font-size="12">${esc(group)}</text>`,
    );
  });

  if (seriesNames.length > 1) {
    seriesNames.forEach((name, si) => {
      const lx = MARGIN.left + si * 120;
      const ly = HEIGHT - 20;
      const color =
        SERIES_COLORS[name] ?? FALLBACK_COLORS[si % FALLBACK_COLORS.length];
      parts.push(`<rect x="${lx}" y="${ly - 10}" width="12" height="12" fill="${color}"/>`);
      parts.push(
        `<text x="${lx + 18}" y="${ly}" font-size="12">${esc(name || 'value')}</text>`,
      );
    });
  }

  parts.push('</svg>');
  return parts.join('\n') + '\n';
}
