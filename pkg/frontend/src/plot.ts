/**
 * SVG outcome panels: auction length, lotteries, revenue, and welfare
 * against the number of bidder types, colored by bid-processing rule,
 * one marker per run. No aggregation: the point is to see the range of
 * equilibria, not their mean.
 */

import { RunRow } from "./schema.js";

export interface PanelOptions {
  /** Keep only rows with this algorithm tag (e.g. "mccfr"). */
  algorithm?: string;
  /** Keep only rows whose instance id starts with this prefix (e.g. "2b"). */
  family?: string;
  /** Jitter seed; fixed default keeps output byte-deterministic. */
  jitterSeed?: number;
  /** Drop rows flagged excluded by the NashConv filter (default true). */
  dropExcluded?: boolean;
}

export class EmptyPlotError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EmptyPlotError";
  }
}

const PANELS = [
  { key: "rounds", label: "auction length (rounds)" },
  { key: "lotteries", label: "lotteries per episode" },
  { key: "revenue", label: "revenue" },
  { key: "welfare", label: "welfare" },
] as const;

const RULE_COLORS: Record<string, string> = {
  drop_by_bidder: "#c23b22",
  drop_by_license: "#1f77b4",
};
const FALLBACK_COLORS = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

const PANEL_W = 320;
const PANEL_H = 240;
const MARGIN = { top: 36, right: 16, bottom: 44, left: 64 };
const GAP = 24;

/** Deterministic PRNG for marker jitter (mulberry32). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function niceTicks(lo: number, hi: number, n = 4): number[] {
  if (!(hi > lo)) {
    return [lo];
  }
  const span = hi - lo;
  const step = 10 ** Math.floor(Math.log10(span / n));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= n) ?? 10 * step;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / chosen) * chosen; v <= hi + 1e-12; v += chosen) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export function filterRows(rows: RunRow[], opts: PanelOptions): RunRow[] {
  let out = rows;
  if (opts.dropExcluded ?? true) {
    out = out.filter((r) => !r.excluded);
  }
  if (opts.algorithm !== undefined) {
    out = out.filter((r) => r.algorithm === opts.algorithm);
  }
  if (opts.family !== undefined) {
    out = out.filter((r) => r.instanceId.startsWith(opts.family!));
  }
  return out;
}

export function renderPanels(rows: RunRow[], opts: PanelOptions = {}): string {
  const data = filterRows(rows, opts);
  if (data.length === 0) {
    throw new EmptyPlotError(
      "no rows left to plot after filtering; check --algo/--family"
    );
  }
  const rules = [...new Set(data.map((r) => r.rule))].sort();
  const colors = new Map(
    rules.map((rule, i) => [
      rule,
      RULE_COLORS[rule] ?? FALLBACK_COLORS[i % FALLBACK_COLORS.length],
    ])
  );
  const typeCounts = [...new Set(data.map((r) => r.numTypes))].sort(
    (a, b) => a - b
  );
  const rand = mulberry32(opts.jitterSeed ?? 20240801);

  const width = MARGIN.left + 2 * PANEL_W + GAP + MARGIN.right;
  const height = MARGIN.top + 2 * PANEL_H + GAP + MARGIN.bottom + 28;
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}" ` +
      `font-family="sans-serif" font-size="11">`
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);

  PANELS.forEach((panel, pi) => {
    const px = MARGIN.left + (pi % 2) * (PANEL_W + GAP);
    const py = MARGIN.top + Math.floor(pi / 2) * (PANEL_H + GAP);
    const values = data.map((r) => r[panel.key]);
    const lo = Math.min(0, ...values);
    const hi = Math.max(...values, lo + 1e-9);
    const pad = 0.08 * (hi - lo) || 0.5;
    const yLo = lo - (lo < 0 ? pad : 0);
    const yHi = hi + pad;
    const xOf = (types: number, jitter: number) => {
      const slot = typeCounts.indexOf(types);
      const center = ((slot + 0.5) / typeCounts.length) * PANEL_W;
      return px + center + (jitter - 0.5) * Math.min(34, PANEL_W / (3 * typeCounts.length));
    };
    const yOf = (v: number) =>
      py + PANEL_H - ((v - yLo) / (yHi - yLo)) * PANEL_H;

    parts.push(`<g id="panel-${panel.key}">`);
    parts.push(
      `<rect x="${px}" y="${py}" width="${PANEL_W}" height="${PANEL_H}" ` +
        `fill="none" stroke="#444"/>`
    );
    parts.push(
      `<text x="${px + PANEL_W / 2}" y="${py - 8}" text-anchor="middle" ` +
        `font-size="13">${esc(panel.label)}</text>`
    );
    for (const tick of niceTicks(yLo, yHi)) {
      const y = yOf(tick);
      parts.push(
        `<line x1="${px - 4}" y1="${y.toFixed(2)}" x2="${px}" ` +
          `y2="${y.toFixed(2)}" stroke="#444"/>`
      );
      parts.push(
        `<text x="${px - 8}" y="${(y + 3.5).toFixed(2)}" ` +
          `text-anchor="end">${tick}</text>`
      );
    }
    for (const types of typeCounts) {
      const x = xOf(types, 0.5);
      parts.push(
        `<text x="${x.toFixed(2)}" y="${py + PANEL_H + 16}" ` +
          `text-anchor="middle">${types}</text>`
      );
    }
    parts.push(
      `<text x="${px + PANEL_W / 2}" y="${py + PANEL_H + 34}" ` +
        `text-anchor="middle">number of types</text>`
    );
    for (const row of data) {
      const x = xOf(row.numTypes, rand());
      const y = yOf(row[panel.key]);
      parts.push(
        `<circle class="marker" cx="${x.toFixed(2)}" cy="${y.toFixed(2)}" ` +
          `r="3.2" fill="${colors.get(row.rule)}" fill-opacity="0.75"/>`
      );
    }
    parts.push(`</g>`);
  });

  const legendY = height - 14;
  let legendX = MARGIN.left;
  parts.push(`<g id="legend">`);
  for (const rule of rules) {
    parts.push(
      `<circle cx="${legendX}" cy="${legendY - 4}" r="4" ` +
        `fill="${colors.get(rule)}"/>`
    );
    parts.push(
      `<text x="${legendX + 8}" y="${legendY}">${esc(rule)}</text>`
    );
    legendX += 10 + 8 * rule.length;
  }
  parts.push(`</g>`);
  parts.push(`</svg>`);
  return parts.join("\n");
}

/** Same panels restricted to straightforward-bidding simulation rows. */
export function renderStraightforward(
  rows: RunRow[],
  opts: PanelOptions = {}
): string {
  return renderPanels(rows, { ...opts, algorithm: "straightforward" });
}
