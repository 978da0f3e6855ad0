#!/usr/bin/env node
/**
 * Render solver outputs to SVG figures.
 *
 *   ldg-plot --kind hconv      --in errors.csv            --out figures/
 *   ldg-plot --kind pconv      --in errors.csv            --out figures/
 *   ldg-plot --kind trajectory --in trajectory.csv        --out figures/
 *   ldg-plot --kind field      --in fields_t5.vtk         --out figures/ [--scalar q]
 */

import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { basename, join } from "node:path";
import process from "node:process";

import { renderField, renderHConv, renderPConv, renderTrajectory } from "./plots.js";
import { parseVtk } from "./vtk.js";

interface Args {
  kind: string;
  inputs: string[];
  out: string;
  scalar: string;
  equilibrium: number;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { kind: "", inputs: [], out: ".", scalar: "q", equilibrium: 0.9 };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--kind":
        args.kind = argv[++i];
        break;
      case "--in":
        args.inputs.push(argv[++i]);
        break;
      case "--out":
        args.out = argv[++i];
        break;
      case "--scalar":
        args.scalar = argv[++i];
        break;
      case "--equilibrium":
        args.equilibrium = Number(argv[++i]);
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (!args.kind) throw new Error("--kind is required");
  if (args.inputs.length === 0) throw new Error("--in is required");
  return args;
}

export function run(args: Args): string[] {
  mkdirSync(args.out, { recursive: true });
  const written: string[] = [];
  for (const input of args.inputs) {
    const stem = basename(input).replace(/\.[^.]+$/, "");
    const outPath = join(args.out, `${stem}_${args.kind}.svg`);
    const text = readFileSync(input, "utf-8");
    let svg: string;
    switch (args.kind) {
      case "hconv":
        svg = renderHConv(text, stem).svg;
        break;
      case "pconv":
        svg = renderPConv(text, stem).svg;
        break;
      case "trajectory":
        svg = renderTrajectory(text, undefined, stem).svg;
        break;
      case "field": {
        const grid = parseVtk(text);
        svg = renderField(grid, args.scalar, undefined, args.equilibrium, stem).svg;
        break;
      }
      default:
        throw new Error(`unknown plot kind ${args.kind}`);
    }
    writeFileSync(outPath, svg);
    written.push(outPath);
  }
  return written;
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(basename(process.argv[1]));

if (isMain) {
  try {
    const written = run(parseArgs(process.argv.slice(2)));
    for (const path of written) console.log(path);
  } catch (err) {
    console.error(String(err));
    process.exit(1);
  }
}
