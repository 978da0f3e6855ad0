/**
 * Minimal reader for the solver's legacy ASCII VTK unstructured grids:
 * triangle cells with point data scalars (points are duplicated per
 * element, so discontinuous fields render faithfully).
 */

export interface TriangleGrid {
  points: Array<[number, number]>;
  cells: Array<[number, number, number]>;
  scalars: Record<string, number[]>;
}

export function parseVtk(text: string): TriangleGrid {
  const lines = text.split(/\r?\n/);
  let i = 0;

  function next(): string {
    while (i < lines.length && lines[i].trim() === "") i++;
    if (i >= lines.length) throw new Error("unexpected end of VTK file");
    return lines[i++];
  }

  const header = next();
  if (!header.startsWith("# vtk DataFile")) {
    throw new Error("not a legacy VTK file");
  }
  next(); // title
  const fmt = next().trim();
  if (fmt !== "ASCII") throw new Error(`unsupported VTK format ${fmt}`);
  const dataset = next().trim();
  if (dataset !== "DATASET UNSTRUCTURED_GRID") {
    throw new Error(`unsupported dataset ${dataset}`);
  }

  const pointsHeader = next().trim().split(/\s+/);
  if (pointsHeader[0] !== "POINTS") throw new Error("POINTS section missing");
  const nPoints = Number(pointsHeader[1]);
  const points: Array<[number, number]> = [];
  while (points.length < nPoints) {
    const vals = next().trim().split(/\s+/).map(Number);
    for (let k = 0; k + 2 < vals.length + 1 && k + 2 <= vals.length; k += 3) {
      points.push([vals[k], vals[k + 1]]);
    }
  }

  const cellsHeader = next().trim().split(/\s+/);
  if (cellsHeader[0] !== "CELLS") throw new Error("CELLS section missing");
  const nCells = Number(cellsHeader[1]);
  const cells: Array<[number, number, number]> = [];
  for (let c = 0; c < nCells; c++) {
    const vals = next().trim().split(/\s+/).map(Number);
    if (vals[0] !== 3) throw new Error("only triangle cells are supported");
    cells.push([vals[1], vals[2], vals[3]]);
  }

  const typesHeader = next().trim().split(/\s+/);
  if (typesHeader[0] !== "CELL_TYPES") throw new Error("CELL_TYPES missing");
  for (let c = 0; c < nCells; c++) next();

  const scalars: Record<string, number[]> = {};
  const pdHeader = next().trim().split(/\s+/);
  if (pdHeader[0] !== "POINT_DATA") throw new Error("POINT_DATA missing");
  while (i < lines.length) {
    let line = "";
    try {
      line = next();
    } catch {
      break;
    }
    const parts = line.trim().split(/\s+/);
    if (parts[0] !== "SCALARS") continue;
    const name = parts[1];
    next(); // LOOKUP_TABLE
    const values: number[] = [];
    while (values.length < nPoints) {
      const vals = next().trim().split(/\s+/).map(Number);
      values.push(...vals);
    }
    scalars[name] = values;
  }
  return { points, cells, scalars };
}
