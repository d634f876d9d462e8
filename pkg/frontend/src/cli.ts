#!/usr/bin/env node
/**
 * report-plots --bundle <dir> --out <dir>
 *
 * Renders the figures appropriate to a bundle's experiment:
 *   transport-dissipation  decay per nu      + terminal-energy-vs-nu scaling
 *   ou-homogenization      decay per eps     + gap-vs-eps scaling
 *   hm1-scaling            decay per kappa   + supremum-vs-kappa scaling
 *   corrector-constants    shell-average convergence scaling
 *
 * Output files are deterministically named and byte-stable for a fixed
 * bundle; figures.json lists them with fitted slopes and warnings.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { RunBundle, loadBundle } from "./bundle.js";
import { FigureInputError, decayFigure, decaySeriesFromBundle } from "./decay.js";
import { ScalingPoint, scalingFigure } from "./scaling.js";

interface FigureRecord {
  file: string;
  kind: string;
  slope?: number;
  warnings?: string[];
}

function summaryRows(bundle: RunBundle, key: string): Array<Record<string, number>> {
  const rows = bundle.summary[key];
  if (!Array.isArray(rows)) return [];
  return rows as Array<Record<string, number>>;
}

export function renderBundle(bundleDir: string, outDir: string): FigureRecord[] {
  const bundle = loadBundle(bundleDir);
  mkdirSync(outDir, { recursive: true });
  const records: FigureRecord[] = [];
  const experiment = bundle.manifest.experiment;

  const writeFigure = (name: string, kind: string, svg: string, extra?: Partial<FigureRecord>) => {
    writeFileSync(join(outDir, name), svg);
    records.push({ file: name, kind, ...extra });
  };

  const writeScaling = (
    name: string,
    points: ScalingPoint[],
    title: string,
    xLabel: string,
    yLabel: string,
  ) => {
    const result = scalingFigure(points, title, xLabel, yLabel);
    writeFileSync(join(outDir, name), result.svg);
    records.push({ file: name, kind: "scaling", slope: result.slope, warnings: result.warnings });
  };

  if (experiment === "transport-dissipation") {
    const series = decaySeriesFromBundle(bundle, "nu");
    writeFigure("decay.svg", "decay", decayFigure(series, "Energy decay per viscosity"));
    const points = summaryRows(bundle, "per_nu").map((row) => ({
      x: row.nu,
      y: row.final_l2sq,
    }));
    writeScaling("scaling.svg", points, "Terminal energy vs viscosity", "nu", "|rho_end|^2");
  } else if (experiment === "ou-homogenization") {
    const series = decaySeriesFromBundle(bundle, "eps");
    writeFigure("decay.svg", "decay", decayFigure(series, "Energy decay per correlation time"));
    const points = summaryRows(bundle, "per_eps").map((row) => ({
      x: row.eps,
      y: row.gap_to_reference,
    }));
    writeScaling("scaling.svg", points, "Gap to white-driver reference vs eps", "eps", "gap");
  } else if (experiment === "hm1-scaling") {
    const series = decaySeriesFromBundle(bundle, "kappa");
    writeFigure("decay.svg", "decay", decayFigure(series, "Energy decay per shell size"));
    const points = summaryRows(bundle, "per_shell").map((row) => ({
      x: row.kappa,
      y: row.window_sup_low_hm1sq,
    }));
    writeScaling("scaling.svg", points, "Windowed low-mode H^-1 sup vs kappa", "kappa", "sup");
  } else if (experiment === "corrector-constants") {
    const points = summaryRows(bundle, "alignment").map((row) => ({
      x: row.shell_n,
      y: row.max_abs_err_3d,
    }));
    writeScaling("convergence.svg", points,
      "Shell-average distance to the 4/15 limit", "N", "max |err|");
  } else {
    throw new FigureInputError(`no figure recipe for experiment "${experiment}"`);
  }

  const meta = JSON.stringify({ bundle: experiment, figures: records }, null, 1) + "\n";
  writeFileSync(join(outDir, "figures.json"), meta);
  return records;
}

function parseArgs(argv: string[]): { bundle: string; out: string } {
  let bundle = "";
  let out = "";
  for (let i = 0; i < argv.length; i += 1) {
    if (argv[i] === "--bundle") bundle = argv[++i] ?? "";
    else if (argv[i] === "--out") out = argv[++i] ?? "";
    else {
      throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (!bundle || !out) {
    throw new Error("usage: report-plots --bundle <dir> --out <dir>");
  }
  return { bundle, out };
}

const invokedDirectly =
  process.argv[1]?.endsWith("cli.js") || process.argv[1]?.endsWith("cli.ts");
if (invokedDirectly) {
  try {
    const { bundle, out } = parseArgs(process.argv.slice(2));
    const records = renderBundle(bundle, out);
    for (const record of records) {
      const slope = record.slope !== undefined ? `  slope=${record.slope.toFixed(4)}` : "";
      console.log(`${record.file}  (${record.kind})${slope}`);
      for (const warning of record.warnings ?? []) {
        console.warn(`  warning: ${warning}`);
      }
    }
  } catch (error) {
    console.error(`${(error as Error).name}: ${(error as Error).message}`);
    process.exit(1);
  }
}
