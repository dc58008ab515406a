/**
 * CLI: export --variant V --src model.safetensors --out model.ckpt [--map map.json]
 *
 * Exit codes: 0 converted, 1 usage error, 2 conversion failure (unfilled
 * canonical names or shape mismatches; details on stderr).
 */

import { readFileSync } from "node:fs";
import { exportCheckpoint, formatReport } from "./export.js";
import { VARIANTS, type Variant } from "./manifest.js";
import { parseUserMap } from "./namemap.js";

function usage(): void {
  console.error(
    "usage: cibse-bridge export --variant V --src model.safetensors --out model.ckpt [--map map.json] [--nc 2]",
  );
  console.error(`  variants: ${VARIANTS.join(", ")}`);
}

export function main(argv: string[]): number {
  if (argv[0] !== "export") {
    usage();
    return 1;
  }
  let variant: string | undefined;
  let src: string | undefined;
  let out: string | undefined;
  let mapPath: string | undefined;
  let nc = 2;
  for (let i = 1; i < argv.length; i++) {
    switch (argv[i]) {
      case "--variant":
        variant = argv[++i];
        break;
      case "--src":
        src = argv[++i];
        break;
      case "--out":
        out = argv[++i];
        break;
      case "--map":
        mapPath = argv[++i];
        break;
      case "--nc":
        nc = Number(argv[++i]);
        break;
      default:
        console.error(`unknown argument: ${argv[i]}`);
        usage();
        return 1;
    }
  }
  if (!variant || !src || !out) {
    usage();
    return 1;
  }
  if (!VARIANTS.includes(variant as Variant)) {
    console.error(`unknown variant ${variant}; expected one of ${VARIANTS.join(", ")}`);
    return 1;
  }
  try {
    const map = mapPath ? parseUserMap(readFileSync(mapPath, "utf-8")) : undefined;
    const report = exportCheckpoint(src, variant as Variant, out, map, nc);
    const text = formatReport(report);
    if (!report.written) {
      console.error(text);
      return 2;
    }
    console.log(text);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

if (process.argv[1] && /cli\.(ts|js)$/.test(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
