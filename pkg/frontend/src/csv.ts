/**
 * Strict reader for the simulator's fixed-schema result CSV.
 *
 * Numeric cells keep their original text alongside the parsed value so that
 * chart labels can reproduce the CSV content exactly.
 */

export const EXPECTED_HEADER = [
  'scenario',
  'variant',
  'run',
  'handshake_ms',
  'page_load_ms',
  'satellite_round_trips',
  'satellite_bytes',
  'cache_hit_rate',
  'revocation_window_ms',
] as const;

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'SchemaError';
  }
}

export interface MetricsRow {
  scenario: string;
  variant: string;
  run: number;
  handshakeMs: number;
  handshakeMsText: string;
  pageLoadMs: number;
  pageLoadMsText: string;
  satelliteRoundTrips: number;
  satelliteBytes: number;
  cacheHitRate: number;
  revocationWindowMs: number;
}

export function parseCsv(text: string): MetricsRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError('CSV is empty');
  }
  const header = lines[0].split(',');
  const expected = EXPECTED_HEADER.join(',');
  if (header.join(',') !== expected) {
    throw new SchemaError(
      `unexpected header: got "${lines[0]}", want "${expected}"`,
    );
  }
  if (lines.length === 1) {
    throw new SchemaError('CSV has a header but no rows');
  }

  return lines.slice(1).map((line, index) => {
    const cells = line.split(',');
    if (cells.length !== EXPECTED_HEADER.length) {
      throw new SchemaError(
        `row ${index + 1} has ${cells.length} fields, want ${EXPECTED_HEADER.length}`,
      );
    }
    const num = (column: number): number => {
      const value = Number(cells[column]);
      if (!Number.isFinite(value) || value < 0) {
        throw new SchemaError(
          `row ${index + 1}, column ${EXPECTED_HEADER[column]}: bad value "${cells[column]}"`,
        );
      }
      return value;
    };
    return {
      scenario: cells[0],
      variant: cells[1],
      run: num(2),
      handshakeMs: num(3),
      handshakeMsText: cells[3],
      pageLoadMs: num(4),
      pageLoadMsText: cells[4],
      satelliteRoundTrips: num(5),
      satelliteBytes: num(6),
      cacheHitRate: num(7),
      revocationWindowMs: num(8),
    };
  });
}
