/**
 * Bundle loading: manifest + summary JSON, ledger CSVs, hash verification.
 *
 * A bundle directory is the output of one `shellflow run`:
 *   manifest.json  — config echo and a file table with sha256 digests
 *   summary.json   — experiment metrics
 *   ledgers/*.csv  — energy time series, columns
 *                    t,l2sq,h1sq,hm1sq,low_hm1sq,diss_int,stage
 *
 * Every ledger referenced by the manifest must exist and hash-match;
 * anything else raises BundleIntegrityError.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";
import { join } from "node:path";

export const LEDGER_COLUMNS = [
  "t",
  "l2sq",
  "h1sq",
  "hm1sq",
  "low_hm1sq",
  "diss_int",
  "stage",
] as const;

export type LedgerColumn = (typeof LEDGER_COLUMNS)[number];

export interface LedgerTable {
  t: number[];
  l2sq: number[];
  h1sq: number[];
  hm1sq: number[];
  low_hm1sq: number[];
  diss_int: number[];
  stage: number[];
}

export interface ManifestFile {
  path: string;
  sha256: string;
  role: string;
  params: Record<string, unknown>;
}

export interface Manifest {
  experiment: string;
  config: Record<string, unknown>;
  package_version: string;
  seed: number | null;
  files: ManifestFile[];
}

export interface RunBundle {
  dir: string;
  manifest: Manifest;
  summary: Record<string, unknown>;
  ledgers: Map<string, LedgerTable>;
}

export class BundleIntegrityError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BundleIntegrityError";
  }
}

function sha256Hex(buffer: Buffer): string {
  return createHash("sha256").update(buffer).digest("hex");
}

export function parseLedgerCsv(text: string, label: string): LedgerTable {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new BundleIntegrityError(`ledger ${label} is empty`);
  }
  const header = lines[0].split(",");
  if (header.join(",") !== LEDGER_COLUMNS.join(",")) {
    throw new BundleIntegrityError(
      `ledger ${label} has header "${lines[0]}", expected "${LEDGER_COLUMNS.join(",")}"`,
    );
  }
  const table: LedgerTable = {
    t: [], l2sq: [], h1sq: [], hm1sq: [], low_hm1sq: [], diss_int: [], stage: [],
  };
  for (let i = 1; i < lines.length; i += 1) {
    const cells = lines[i].split(",");
    if (cells.length !== LEDGER_COLUMNS.length) {
      throw new BundleIntegrityError(`ledger ${label} row ${i} has ${cells.length} cells`);
    }
    const values = cells.map(Number);
    if (values.some((v) => Number.isNaN(v))) {
      throw new BundleIntegrityError(`ledger ${label} row ${i} holds a non-number`);
    }
    table.t.push(values[0]);
    table.l2sq.push(values[1]);
    table.h1sq.push(values[2]);
    table.hm1sq.push(values[3]);
    table.low_hm1sq.push(values[4]);
    table.diss_int.push(values[5]);
    table.stage.push(values[6]);
  }
  return table;
}

export function loadBundle(dir: string): RunBundle {
  let manifestRaw: Buffer;
  try {
    manifestRaw = readFileSync(join(dir, "manifest.json"));
  } catch {
    throw new BundleIntegrityError(`no manifest.json under ${dir}`);
  }
  const manifest = JSON.parse(manifestRaw.toString()) as Manifest;
  const summary = JSON.parse(
    readFileSync(join(dir, "summary.json")).toString(),
  ) as Record<string, unknown>;

  const ledgers = new Map<string, LedgerTable>();
  for (const entry of manifest.files) {
    let raw: Buffer;
    try {
      raw = readFileSync(join(dir, entry.path));
    } catch {
      throw new BundleIntegrityError(`manifest references missing file ${entry.path}`);
    }
    const digest = sha256Hex(raw);
    if (digest !== entry.sha256) {
      throw new BundleIntegrityError(
        `hash mismatch for ${entry.path}: manifest ${entry.sha256.slice(0, 12)}..., ` +
          `file ${digest.slice(0, 12)}...`,
      );
    }
    if (entry.role === "ledger" && entry.path.endsWith(".csv")) {
      ledgers.set(entry.path, parseLedgerCsv(raw.toString(), entry.path));
    }
  }
  return { dir, manifest, summary, ledgers };
}

/** Ledger entries labelled with a numeric parameter (nu, eps, kappa...). */
export function ledgersByParam(
  bundle: RunBundle,
  param: string,
): Array<{ value: number; path: string; table: LedgerTable }> {
  const rows: Array<{ value: number; path: string; table: LedgerTable }> = [];
  for (const entry of bundle.manifest.files) {
    if (entry.role !== "ledger" || !bundle.ledgers.has(entry.path)) continue;
    const value = entry.params[param];
    if (typeof value === "number") {
      rows.push({ value, path: entry.path, table: bundle.ledgers.get(entry.path)! });
    }
  }
  rows.sort((a, b) => a.value - b.value);
  return rows;
}
