/**
 * Energy-decay figure: one |rho|_{L2}^2 curve per grouping value (nu or eps)
 * on shared axes, stage boundaries marked by dashed verticals derived from
 * the ledgers' stage column.
 */

import { LedgerTable, RunBundle, ledgersByParam } from "./bundle.js";
import { PALETTE, Svg, linearScale, plotArea, shortNumber } from "./svg.js";

export class FigureInputError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FigureInputError";
  }
}

export interface DecaySeries {
  label: string;
  table: LedgerTable;
}

export function stageBoundaries(tables: LedgerTable[]): number[] {
  const bounds = new Set<number>();
  for (const table of tables) {
    for (let i = 1; i < table.stage.length; i += 1) {
      if (table.stage[i] !== table.stage[i - 1]) {
        bounds.add(table.t[i]);
      }
    }
  }
  return [...bounds].sort((a, b) => a - b);
}

export function decayFigure(series: DecaySeries[], title: string): string {
  if (series.length === 0) {
    throw new FigureInputError("decay figure needs at least one ledger");
  }
  let tMax = -Infinity;
  let eMax = 0;
  for (const s of series) {
    if (s.table.t.length === 0) {
      throw new FigureInputError(`ledger for ${s.label} has no samples`);
    }
    tMax = Math.max(tMax, s.table.t[s.table.t.length - 1]);
    eMax = Math.max(eMax, ...s.table.l2sq);
  }
  const area = plotArea();
  const xs = linearScale(0, tMax, area.x0, area.x1);
  const ys = linearScale(0, eMax * 1.05, area.y0, area.y1);
  const svg = new Svg(title);
  svg.axes(xs, ys, "t", "|rho|_L2^2");
  for (const bound of stageBoundaries(series.map((s) => s.table))) {
    svg.vline(xs.toPixel(bound));
  }
  const legend: Array<{ label: string; color: string }> = [];
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts: Array<[number, number]> = s.table.t.map((t, j) => [
      xs.toPixel(t),
      ys.toPixel(s.table.l2sq[j]),
    ]);
    svg.polyline(pts, color);
    legend.push({ label: s.label, color });
  });
  svg.legend(legend);
  return svg.render();
}

/** Build the decay series for a bundle, grouped by a ledger parameter. */
export function decaySeriesFromBundle(bundle: RunBundle, groupBy: string): DecaySeries[] {
  const rows = ledgersByParam(bundle, groupBy);
  const series = rows.map((row) => ({
    label: `${groupBy}=${shortNumber(row.value)}`,
    table: row.table,
  }));
  // ledgers without the grouping parameter (e.g. a transport reference) are
  // appended under their manifest role
  for (const entry of bundle.manifest.files) {
    if (entry.role !== "ledger" || !bundle.ledgers.has(entry.path)) continue;
    if (typeof entry.params[groupBy] === "number") continue;
    const tag =
      typeof entry.params.model === "string" ? entry.params.model : entry.path;
    series.push({ label: tag, table: bundle.ledgers.get(entry.path)! });
  }
  if (series.length === 0) {
    throw new FigureInputError(
      `bundle ${bundle.dir} holds no ledgers grouped by "${groupBy}"`,
    );
  }
  return series;
}
