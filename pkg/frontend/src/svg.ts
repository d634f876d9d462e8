/**
 * Minimal deterministic SVG scene builder: fixed canvas, fixed palette,
 * no timestamps or random ids, numbers printed with a fixed precision so a
 * rerun over the same bundle emits byte-identical files.
 */

export const WIDTH = 760;
export const HEIGHT = 480;
export const MARGIN = { left: 72, right: 160, top: 36, bottom: 56 };

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f",
];

const fmt = (value: number): string => {
  if (!Number.isFinite(value)) return "0";
  const s = value.toPrecision(8);
  return s.includes(".") ? s.replace(/\.?0+$/, "").replace(/\.?0+e/, "e") : s;
};

export interface Scale {
  toPixel(value: number): number;
  ticks(): number[];
  label(value: number): string;
}

export function linearScale(lo: number, hi: number, pixLo: number, pixHi: number): Scale {
  const span = hi - lo || 1;
  const nice = niceTicks(lo, hi, 6);
  return {
    toPixel: (v) => pixLo + ((v - lo) / span) * (pixHi - pixLo),
    ticks: () => nice,
    label: (v) => shortNumber(v),
  };
}

export function logScale(lo: number, hi: number, pixLo: number, pixHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const span = lhi - llo || 1;
  const ticks: number[] = [];
  for (let p = Math.ceil(llo - 1e-9); p <= Math.floor(lhi + 1e-9); p += 1) {
    ticks.push(10 ** p);
  }
  if (ticks.length === 0) ticks.push(lo, hi);
  return {
    toPixel: (v) => pixLo + ((Math.log10(v) - llo) / span) * (pixHi - pixLo),
    ticks: () => ticks,
    label: (v) => shortNumber(v),
  };
}

export function shortNumber(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 0.01 && abs < 10_000) {
    return String(Number(v.toPrecision(4)));
  }
  const exp = Math.floor(Math.log10(abs));
  const mant = v / 10 ** exp;
  const m = Number(mant.toPrecision(3));
  return `${m}e${exp}`;
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  const span = hi - lo || 1;
  const step0 = span / count;
  const mag = 10 ** Math.floor(Math.log10(step0));
  const candidates = [1, 2, 2.5, 5, 10].map((m) => m * mag);
  const step = candidates.find((c) => span / c <= count) ?? candidates[4];
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) {
    ticks.push(Number(v.toPrecision(12)));
  }
  return ticks;
}

export class Svg {
  private parts: string[] = [];

  constructor(title: string) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
        `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica,Arial,sans-serif">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      `<title>${escapeXml(title)}</title>`,
      `<text x="${WIDTH / 2}" y="22" text-anchor="middle" font-size="15">${escapeXml(title)}</text>`,
    );
  }

  axes(xScale: Scale, yScale: Scale, xLabel: string, yLabel: string): void {
    const x0 = MARGIN.left;
    const x1 = WIDTH - MARGIN.right;
    const y0 = HEIGHT - MARGIN.bottom;
    const y1 = MARGIN.top;
    this.parts.push(
      `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#222" stroke-width="1"/>`,
      `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#222" stroke-width="1"/>`,
    );
    for (const t of xScale.ticks()) {
      const px = xScale.toPixel(t);
      if (px < x0 - 1e-6 || px > x1 + 1e-6) continue;
      this.parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y0 + 5}" stroke="#222"/>`,
        `<text x="${fmt(px)}" y="${y0 + 20}" text-anchor="middle" font-size="11">${xScale.label(t)}</text>`,
      );
    }
    for (const t of yScale.ticks()) {
      const py = yScale.toPixel(t);
      if (py > y0 + 1e-6 || py < y1 - 1e-6) continue;
      this.parts.push(
        `<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="#222"/>`,
        `<text x="${x0 - 9}" y="${fmt(py + 4)}" text-anchor="end" font-size="11">${yScale.label(t)}</text>`,
      );
    }
    this.parts.push(
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="12">${escapeXml(xLabel)}</text>`,
      `<text x="18" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="12" ` +
        `transform="rotate(-90 18 ${(y0 + y1) / 2})">${escapeXml(yLabel)}</text>`,
    );
  }

  polyline(points: Array<[number, number]>, color: string, dashed = false): void {
    if (points.length === 0) return;
    const attr = dashed ? ' stroke-dasharray="5 4"' : "";
    const path = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(
      `<polyline points="${path}" fill="none" stroke="${color}" stroke-width="1.6"${attr}/>`,
    );
  }

  circle(x: number, y: number, color: string, r = 3.5): void {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${color}"/>`);
  }

  vline(x: number, color = "#999"): void {
    this.parts.push(
      `<line x1="${fmt(x)}" y1="${MARGIN.top}" x2="${fmt(x)}" y2="${HEIGHT - MARGIN.bottom}" ` +
        `stroke="${color}" stroke-width="1" stroke-dasharray="3 4"/>`,
    );
  }

  legend(entries: Array<{ label: string; color: string }>): void {
    const x = WIDTH - MARGIN.right + 12;
    let y = MARGIN.top + 10;
    for (const entry of entries) {
      this.parts.push(
        `<line x1="${x}" y1="${y - 4}" x2="${x + 24}" y2="${y - 4}" stroke="${entry.color}" stroke-width="2"/>`,
        `<text x="${x + 30}" y="${y}" font-size="12">${escapeXml(entry.label)}</text>`,
      );
      y += 20;
    }
  }

  note(text: string, line = 0): void {
    this.parts.push(
      `<text x="${WIDTH - MARGIN.right + 12}" y="${HEIGHT - MARGIN.bottom - 10 - 16 * line}" ` +
        `font-size="12">${escapeXml(text)}</text>`,
    );
  }

  render(): string {
    return [...this.parts, "</svg>", ""].join("\n");
  }
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function plotArea(): { x0: number; x1: number; y0: number; y1: number } {
  return {
    x0: MARGIN.left,
    x1: WIDTH - MARGIN.right,
    y0: HEIGHT - MARGIN.bottom,
    y1: MARGIN.top,
  };
}
