/**
 * Log-log scaling figure: scatter of (x, metric) with the least-squares
 * slope fitted in log space and annotated. Non-positive values cannot be
 * placed on log axes; they are excluded and reported as warnings.
 */

import { Svg, logScale, plotArea, shortNumber } from "./svg.js";
import { FigureInputError } from "./decay.js";

export interface ScalingPoint {
  x: number;
  y: number;
  label?: string;
}

export interface ScalingResult {
  svg: string;
  slope: number;
  intercept: number;
  warnings: string[];
  used: ScalingPoint[];
}

export function fitLogLogSlope(points: ScalingPoint[]): { slope: number; intercept: number } {
  const n = points.length;
  const lx = points.map((p) => Math.log(p.x));
  const ly = points.map((p) => Math.log(p.y));
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i += 1) {
    sxx += (lx[i] - mx) ** 2;
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx === 0) {
    throw new FigureInputError("scaling fit needs at least two distinct x values");
  }
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

export function scalingFigure(
  points: ScalingPoint[],
  title: string,
  xLabel: string,
  yLabel: string,
): ScalingResult {
  const warnings: string[] = [];
  const used = points.filter((p) => {
    if (p.x > 0 && p.y > 0 && Number.isFinite(p.x) && Number.isFinite(p.y)) {
      return true;
    }
    warnings.push(
      `excluded non-positive point (x=${shortNumber(p.x)}, y=${shortNumber(p.y)})`,
    );
    return false;
  });
  const distinctX = new Set(used.map((p) => p.x));
  if (distinctX.size < 2) {
    throw new FigureInputError(
      `scaling figure needs >= 2 distinct positive x values, got ${distinctX.size}`,
    );
  }
  const { slope, intercept } = fitLogLogSlope(used);
  const xs = used.map((p) => p.x);
  const ys = used.map((p) => p.y);
  const area = plotArea();
  const xScale = logScale(Math.min(...xs) / 1.3, Math.max(...xs) * 1.3, area.x0, area.x1);
  const yScale = logScale(Math.min(...ys) / 1.5, Math.max(...ys) * 1.5, area.y0, area.y1);
  const svg = new Svg(title);
  svg.axes(xScale, yScale, xLabel, yLabel);
  // fitted line across the x range
  const fitted: Array<[number, number]> = [Math.min(...xs), Math.max(...xs)].map((x) => [
    xScale.toPixel(x),
    yScale.toPixel(Math.exp(intercept + slope * Math.log(x))),
  ]);
  svg.polyline(fitted, "#999", true);
  used.forEach((p, i) => {
    svg.circle(xScale.toPixel(p.x), yScale.toPixel(p.y), "#1f77b4");
    if (p.label) {
      svg.note(`${p.label}: ${shortNumber(p.y)}`, used.length - i + 1);
    }
  });
  svg.note(`slope = ${slope.toFixed(4)}`, 0);
  return { svg: svg.render(), slope, intercept, warnings, used };
}
