/**
 * Readers for the solver's CSV artifacts (errors, trajectory, entropy).
 *
 * All files are plain comma-separated tables with one header row; numeric
 * cells may be empty (e.g. the order columns of the coarsest resolution).
 */

export interface CsvTable {
  columns: string[];
  rows: Record<string, number | null>[];
}

export function parseCsv(text: string): CsvTable {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length < 1) {
    throw new Error("empty CSV input");
  }
  const columns = lines[0].split(",").map((c) => c.trim());
  const rows: Record<string, number | null>[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== columns.length) {
      throw new Error(
        `malformed CSV row ${i + 1}: expected ${columns.length} cells, got ${cells.length}`,
      );
    }
    const row: Record<string, number | null> = {};
    columns.forEach((col, j) => {
      const cell = cells[j].trim();
      if (cell === "") {
        row[col] = null;
      } else {
        const value = Number(cell);
        if (!Number.isFinite(value)) {
          throw new Error(`malformed CSV row ${i + 1}: cell '${cell}' is not numeric`);
        }
        row[col] = value;
      }
    });
    rows.push(row);
  }
  return { columns, rows };
}

/** Extract a numeric column, skipping null cells. */
export function column(table: CsvTable, name: string): number[] {
  if (!table.columns.includes(name)) {
    throw new Error(`CSV has no column '${name}' (have: ${table.columns.join(", ")})`);
  }
  return table.rows
    .map((r) => r[name])
    .filter((v): v is number => v !== null);
}

export interface ErrorSweep {
  h: number[];
  quantities: Record<string, number[]>;
}

/** Group an errors.csv table into per-quantity series over mesh size. */
export function readErrorSweep(text: string): ErrorSweep {
  const table = parseCsv(text);
  const axis = table.columns.includes("h") ? "h" : "ell";
  const h = column(table, axis);
  const quantities: Record<string, number[]> = {};
  for (const name of ["E_p", "E_q", "E_sigp", "E_sigq"]) {
    if (table.columns.includes(name)) {
      quantities[name] = column(table, name);
    }
  }
  return { h, quantities };
}
