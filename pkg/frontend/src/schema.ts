/**
 * The frozen family-CSV schema emitted by `clockauction report`.
 *
 * Required columns must be present and numeric columns must parse; any
 * extra columns are carried through untouched.
 */

export interface RunRow {
  instanceId: string;
  rule: string;
  numTypes: number;
  seed: number;
  algorithm: string;
  nashconv: number | null;
  revenue: number;
  welfare: number;
  rounds: number;
  unsold: number;
  lotteries: number;
  excluded: boolean;
  extra: Record<string, string>;
}

export const REQUIRED_COLUMNS = [
  "instance_id",
  "rule",
  "num_types",
  "seed",
  "algorithm",
  "nashconv",
  "revenue",
  "welfare",
  "rounds",
  "unsold",
  "lotteries",
  "excluded",
] as const;

const NUMERIC_COLUMNS = [
  "num_types",
  "seed",
  "revenue",
  "welfare",
  "rounds",
  "unsold",
  "lotteries",
] as const;

export class SchemaError extends Error {
  constructor(public readonly missing: string[]) {
    super(`CSV is missing required column(s): ${missing.join(", ")}`);
    this.name = "SchemaError";
  }
}

/** Minimal CSV split; the schema never emits quoted or embedded commas. */
function splitLine(line: string): string[] {
  return line.split(",").map((s) => s.trim());
}

export function parseFamilyCsv(text: string): RunRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError([...REQUIRED_COLUMNS]);
  }
  const header = splitLine(lines[0]);
  const missing = REQUIRED_COLUMNS.filter((c) => !header.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(missing);
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const rows: RunRow[] = [];
  for (const line of lines.slice(1)) {
    const fields = splitLine(line);
    const get = (name: string) => fields[index.get(name)!] ?? "";
    for (const col of NUMERIC_COLUMNS) {
      if (!Number.isFinite(Number(get(col)))) {
        throw new SchemaError([`${col} (unparseable value "${get(col)}")`]);
      }
    }
    const nashconvRaw = get("nashconv");
    const extra: Record<string, string> = {};
    for (const name of header) {
      if (!(REQUIRED_COLUMNS as readonly string[]).includes(name)) {
        extra[name] = fields[index.get(name)!] ?? "";
      }
    }
    rows.push({
      instanceId: get("instance_id"),
      rule: get("rule"),
      numTypes: Number(get("num_types")),
      seed: Number(get("seed")),
      algorithm: get("algorithm"),
      nashconv: nashconvRaw === "" ? null : Number(nashconvRaw),
      revenue: Number(get("revenue")),
      welfare: Number(get("welfare")),
      rounds: Number(get("rounds")),
      unsold: Number(get("unsold")),
      lotteries: Number(get("lotteries")),
      excluded: /^(true|1)$/i.test(get("excluded")),
      extra,
    });
  }
  return rows;
}
