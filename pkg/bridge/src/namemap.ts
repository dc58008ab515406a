/**
 * Default source-to-canonical name maps.
 *
 * Source checkpoints follow the mainstream ecosystem's module naming
 * (`model.N....` with BN stats as running_mean/running_var). Inserting SE
 * modules renumbers every later source module, while the engine keeps the
 * published indices stable and appends SE as layer23/24/25 — the map encodes
 * that renumbering. A user map (JSON array of [source, canonical] pairs) can
 * override all of this for other ecosystem layouts.
 */

import { REG_MAX, type Variant, hasCib, hasSe } from "./manifest.js";

export interface MapEntry {
  source: string;
  canonical: string;
  /** reshape applied to the source tensor, e.g. (1,16,1,1) -> (16,) */
  reshape?: number[];
}

const BN = [
  ["bn.weight", "bn.gamma"],
  ["bn.bias", "bn.beta"],
  ["bn.running_mean", "bn.mean"],
  ["bn.running_var", "bn.var"],
] as const;

function convBlock(src: string, dst: string): MapEntry[] {
  const out: MapEntry[] = [{ source: `${src}.conv.weight`, canonical: `${dst}.conv.weight` }];
  for (const [s, d] of BN) out.push({ source: `${src}.${s}`, canonical: `${dst}.${d}` });
  return out;
}

function c2f(src: string, dst: string, n: number): MapEntry[] {
  const out = convBlock(`${src}.cv1`, `${dst}.cv1`);
  for (let j = 0; j < n; j++) {
    out.push(...convBlock(`${src}.m.${j}.cv1`, `${dst}.m${j}.cv1`));
    out.push(...convBlock(`${src}.m.${j}.cv2`, `${dst}.m${j}.cv2`));
  }
  out.push(...convBlock(`${src}.cv2`, `${dst}.cv2`));
  return out;
}

function c2fcib(src: string, dst: string, n: number): MapEntry[] {
  const out = convBlock(`${src}.cv1`, `${dst}.cv1`);
  for (let j = 0; j < n; j++) {
    // the inverted block is a Sequential of five convs: cv1.0 .. cv1.4
    for (let k = 0; k < 5; k++) {
      out.push(...convBlock(`${src}.m.${j}.cv1.${k}`, `${dst}.m${j}.cv${k + 1}`));
    }
  }
  out.push(...convBlock(`${src}.cv2`, `${dst}.cv2`));
  return out;
}

function sppf(src: string, dst: string): MapEntry[] {
  return [...convBlock(`${src}.cv1`, `${dst}.cv1`), ...convBlock(`${src}.cv2`, `${dst}.cv2`)];
}

function seBlock(src: string, dst: string): MapEntry[] {
  // Sequential(Linear, ReLU, Linear, Sigmoid) without biases
  return [
    { source: `${src}.fc.0.weight`, canonical: `${dst}.fc1.weight` },
    { source: `${src}.fc.2.weight`, canonical: `${dst}.fc2.weight` },
  ];
}

function detect(src: string, dst: string): MapEntry[] {
  const out: MapEntry[] = [];
  for (let s = 0; s < 3; s++) {
    out.push(...convBlock(`${src}.cv2.${s}.0`, `${dst}.box${s}.cv1`));
    out.push(...convBlock(`${src}.cv2.${s}.1`, `${dst}.box${s}.cv2`));
    out.push({ source: `${src}.cv2.${s}.2.weight`, canonical: `${dst}.box${s}.out.weight` });
    out.push({ source: `${src}.cv2.${s}.2.bias`, canonical: `${dst}.box${s}.out.bias` });
    out.push(...convBlock(`${src}.cv3.${s}.0`, `${dst}.cls${s}.cv1`));
    out.push(...convBlock(`${src}.cv3.${s}.1`, `${dst}.cls${s}.cv2`));
    out.push({ source: `${src}.cv3.${s}.2.weight`, canonical: `${dst}.cls${s}.out.weight` });
    out.push({ source: `${src}.cv3.${s}.2.bias`, canonical: `${dst}.cls${s}.out.bias` });
  }
  out.push({ source: `${src}.dfl.conv.weight`, canonical: `${dst}.dfl.weight`, reshape: [REG_MAX] });
  return out;
}

/**
 * Source module index for each canonical layer id. Without SE the graphs line
 * up one-to-one; with SE the source inserts modules after 15/18/21 and pushes
 * everything later up by one each time.
 */
export function sourceIndex(variant: Variant, canonical: number): number {
  if (!hasSe(variant)) return canonical;
  const shifted: Record<number, number> = {
    23: 16, 16: 17, 17: 18, 18: 19, 24: 20, 19: 21, 20: 22, 21: 23, 25: 24, 22: 25,
  };
  return canonical in shifted ? shifted[canonical] : canonical;
}

export function defaultNameMap(variant: Variant): MapEntry[] {
  const cib = hasCib(variant);
  const src = (i: number) => `model.${sourceIndex(variant, i)}`;
  const out: MapEntry[] = [];
  out.push(...convBlock(src(0), "layer0"));
  out.push(...convBlock(src(1), "layer1"));
  out.push(...c2f(src(2), "layer2", 1));
  out.push(...convBlock(src(3), "layer3"));
  out.push(...c2f(src(4), "layer4", 2));
  out.push(...convBlock(src(5), "layer5"));
  out.push(...(cib ? c2fcib(src(6), "layer6", 2) : c2f(src(6), "layer6", 2)));
  out.push(...convBlock(src(7), "layer7"));
  out.push(...(cib ? c2fcib(src(8), "layer8", 1) : c2f(src(8), "layer8", 1)));
  out.push(...sppf(src(9), "layer9"));
  out.push(...c2f(src(12), "layer12", 1));
  out.push(...c2f(src(15), "layer15", 1));
  if (hasSe(variant)) out.push(...seBlock(src(23), "layer23"));
  out.push(...convBlock(src(16), "layer16"));
  out.push(...c2f(src(18), "layer18", 1));
  if (hasSe(variant)) out.push(...seBlock(src(24), "layer24"));
  out.push(...convBlock(src(19), "layer19"));
  out.push(...c2f(src(21), "layer21", 1));
  if (hasSe(variant)) out.push(...seBlock(src(25), "layer25"));
  out.push(...detect(src(22), "layer22"));
  return out;
}

export function parseUserMap(json: string): MapEntry[] {
  const raw = JSON.parse(json);
  if (!Array.isArray(raw)) throw new Error("name map must be a JSON array of [source, canonical] pairs");
  return raw.map((pair, i) => {
    if (!Array.isArray(pair) || pair.length < 2) {
      throw new Error(`name map entry ${i} is not a [source, canonical] pair`);
    }
    const entry: MapEntry = { source: String(pair[0]), canonical: String(pair[1]) };
    if (pair.length > 2) entry.reshape = (pair[2] as number[]).map(Number);
    return entry;
  });
}
