/**
 * The conversion itself: read a source checkpoint, map names, validate every
 * tensor against the target graph's manifest, and emit the engine format.
 * Shape checking happens before anything is written — a mis-mapped tensor
 * must fail loudly, never produce a loadable-but-wrong file.
 */

import type { Tensor, TensorMap } from "./checkpoint.js";
import { writeCheckpoint } from "./checkpoint.js";
import { manifest, type Variant } from "./manifest.js";
import { defaultNameMap, type MapEntry } from "./namemap.js";
import { readSafetensors } from "./safetensors.js";

export interface ExportReport {
  variant: Variant;
  sourceTensors: number;
  mapped: string[];
  unmappedSource: string[];
  missingCanonical: string[];
  shapeErrors: string[];
  written: boolean;
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export function convert(
  source: TensorMap,
  variant: Variant,
  nameMap?: MapEntry[],
  nc = 2,
): { tensors: TensorMap; report: ExportReport } {
  const entries = nameMap ?? defaultNameMap(variant);
  const wanted = manifest(variant, nc);
  const bySource = new Map<string, MapEntry>();
  const byCanonical = new Map<string, MapEntry>();
  for (const e of entries) {
    if (bySource.has(e.source)) throw new Error(`name map reuses source tensor ${e.source}`);
    if (byCanonical.has(e.canonical)) throw new Error(`name map fills ${e.canonical} twice`);
    bySource.set(e.source, e);
    byCanonical.set(e.canonical, e);
  }

  const out: TensorMap = new Map();
  const mapped: string[] = [];
  const missing: string[] = [];
  const shapeErrors: string[] = [];

  for (const spec of wanted) {
    const entry = byCanonical.get(spec.name);
    const src = entry ? source.get(entry.source) : undefined;
    if (!entry || !src) {
      missing.push(spec.name);
      continue;
    }
    let tensor: Tensor = src;
    if (entry.reshape) {
      const n = src.data.length;
      const m = entry.reshape.reduce((a, b) => a * b, 1);
      if (n !== m) {
        shapeErrors.push(`${entry.source}: cannot reshape ${src.shape} to ${entry.reshape}`);
        continue;
      }
      tensor = { shape: entry.reshape.slice(), data: src.data };
    }
    if (!sameShape(tensor.shape, spec.shape)) {
      shapeErrors.push(
        `${spec.name}: source ${entry.source} has shape [${tensor.shape}], graph requires [${spec.shape}]`,
      );
      continue;
    }
    out.set(spec.name, tensor);
    mapped.push(entry.source);
  }

  const mappedSet = new Set(mapped);
  const unmappedSource = [...source.keys()].filter((k) => !mappedSet.has(k));
  return {
    tensors: out,
    report: {
      variant,
      sourceTensors: source.size,
      mapped,
      unmappedSource,
      missingCanonical: missing,
      shapeErrors,
      written: false,
    },
  };
}

export function exportCheckpoint(
  srcPath: string,
  variant: Variant,
  outPath: string,
  nameMap?: MapEntry[],
  nc = 2,
): ExportReport {
  const source = readSafetensors(srcPath);
  const { tensors, report } = convert(source, variant, nameMap, nc);
  if (report.missingCanonical.length === 0 && report.shapeErrors.length === 0) {
    writeCheckpoint(outPath, tensors);
    report.written = true;
  }
  return report;
}

export function formatReport(report: ExportReport): string {
  const lines = [
    `variant:          ${report.variant}`,
    `source tensors:   ${report.sourceTensors}`,
    `mapped:           ${report.mapped.length}`,
    `unmapped source:  ${report.unmappedSource.length}`,
  ];
  for (const name of report.unmappedSource) lines.push(`  - ${name}`);
  if (report.shapeErrors.length) {
    lines.push(`shape errors:     ${report.shapeErrors.length}`);
    for (const err of report.shapeErrors) lines.push(`  ! ${err}`);
  }
  if (report.missingCanonical.length) {
    lines.push(`unfilled canonical names: ${report.missingCanonical.length}`);
    for (const name of report.missingCanonical) lines.push(`  ! ${name}`);
  }
  lines.push(report.written ? "checkpoint written" : "FAILED: nothing written");
  return lines.join("\n");
}
