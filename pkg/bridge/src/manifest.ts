/**
 * Canonical tensor manifest for each target graph: every `layer{i}.*` name the
 * engine's checkpoint must contain, with its exact shape. Mirrors the engine's
 * documented naming contract so a converted checkpoint can be validated before
 * it is written.
 */

export type Variant = "yolov8n" | "yolov8n-se" | "yolov8n-c2fcib" | "cib-se-yolov8";

export const VARIANTS: Variant[] = ["yolov8n", "yolov8n-se", "yolov8n-c2fcib", "cib-se-yolov8"];

export const REG_MAX = 16;
export const SE_REDUCTION = 16;

export interface TensorSpec {
  name: string;
  shape: number[];
}

export function hasSe(variant: Variant): boolean {
  return variant === "yolov8n-se" || variant === "cib-se-yolov8";
}

export function hasCib(variant: Variant): boolean {
  return variant === "yolov8n-c2fcib" || variant === "cib-se-yolov8";
}

function convBlock(path: string, cIn: number, cOut: number, k: number, groups = 1): TensorSpec[] {
  return [
    { name: `${path}.conv.weight`, shape: [cOut, cIn / groups, k, k] },
    { name: `${path}.bn.gamma`, shape: [cOut] },
    { name: `${path}.bn.beta`, shape: [cOut] },
    { name: `${path}.bn.mean`, shape: [cOut] },
    { name: `${path}.bn.var`, shape: [cOut] },
  ];
}

function c2f(path: string, cIn: number, cOut: number, n: number): TensorSpec[] {
  const c = cOut / 2;
  const out = convBlock(`${path}.cv1`, cIn, 2 * c, 1);
  for (let j = 0; j < n; j++) {
    out.push(...convBlock(`${path}.m${j}.cv1`, c, c, 3));
    out.push(...convBlock(`${path}.m${j}.cv2`, c, c, 3));
  }
  out.push(...convBlock(`${path}.cv2`, (2 + n) * c, cOut, 1));
  return out;
}

function c2fcib(path: string, cIn: number, cOut: number, n: number): TensorSpec[] {
  const c = cOut / 2;
  const out = convBlock(`${path}.cv1`, cIn, 2 * c, 1);
  for (let j = 0; j < n; j++) {
    // inverted block expands to 2c (mid = c) inside the C2f skeleton
    out.push(...convBlock(`${path}.m${j}.cv1`, c, c, 3, c));
    out.push(...convBlock(`${path}.m${j}.cv2`, c, 2 * c, 1));
    out.push(...convBlock(`${path}.m${j}.cv3`, 2 * c, 2 * c, 3, 2 * c));
    out.push(...convBlock(`${path}.m${j}.cv4`, 2 * c, c, 1));
    out.push(...convBlock(`${path}.m${j}.cv5`, c, c, 3, c));
  }
  out.push(...convBlock(`${path}.cv2`, (2 + n) * c, cOut, 1));
  return out;
}

function se(path: string, c: number): TensorSpec[] {
  const r = SE_REDUCTION;
  return [
    { name: `${path}.fc1.weight`, shape: [c / r, c] },
    { name: `${path}.fc2.weight`, shape: [c, c / r] },
  ];
}

function detect(path: string, chs: [number, number, number], nc: number): TensorSpec[] {
  const cBox = Math.max(16, Math.floor(chs[0] / 4), 4 * REG_MAX);
  const cCls = Math.max(chs[0], Math.min(nc, 100));
  const out: TensorSpec[] = [];
  chs.forEach((ch, s) => {
    out.push(...convBlock(`${path}.box${s}.cv1`, ch, cBox, 3));
    out.push(...convBlock(`${path}.box${s}.cv2`, cBox, cBox, 3));
    out.push({ name: `${path}.box${s}.out.weight`, shape: [4 * REG_MAX, cBox, 1, 1] });
    out.push({ name: `${path}.box${s}.out.bias`, shape: [4 * REG_MAX] });
    out.push(...convBlock(`${path}.cls${s}.cv1`, ch, cCls, 3));
    out.push(...convBlock(`${path}.cls${s}.cv2`, cCls, cCls, 3));
    out.push({ name: `${path}.cls${s}.out.weight`, shape: [nc, cCls, 1, 1] });
    out.push({ name: `${path}.cls${s}.out.bias`, shape: [nc] });
  });
  out.push({ name: `${path}.dfl.weight`, shape: [REG_MAX] });
  return out;
}

/** Every required tensor, in the engine's canonical order. */
export function manifest(variant: Variant, nc = 2): TensorSpec[] {
  const cib = hasCib(variant);
  const out: TensorSpec[] = [];
  out.push(...convBlock("layer0", 3, 16, 3));
  out.push(...convBlock("layer1", 16, 32, 3));
  out.push(...c2f("layer2", 32, 32, 1));
  out.push(...convBlock("layer3", 32, 64, 3));
  out.push(...c2f("layer4", 64, 64, 2));
  out.push(...convBlock("layer5", 64, 128, 3));
  out.push(...(cib ? c2fcib("layer6", 128, 128, 2) : c2f("layer6", 128, 128, 2)));
  out.push(...convBlock("layer7", 128, 256, 3));
  out.push(...(cib ? c2fcib("layer8", 256, 256, 1) : c2f("layer8", 256, 256, 1)));
  out.push(...convBlock("layer9.cv1", 256, 128, 1));
  out.push(...convBlock("layer9.cv2", 512, 256, 1));
  out.push(...c2f("layer12", 384, 128, 1));
  out.push(...c2f("layer15", 192, 64, 1));
  if (hasSe(variant)) out.push(...se("layer23", 64));
  out.push(...convBlock("layer16", 64, 64, 3));
  out.push(...c2f("layer18", 192, 128, 1));
  if (hasSe(variant)) out.push(...se("layer24", 128));
  out.push(...convBlock("layer19", 128, 128, 3));
  out.push(...c2f("layer21", 384, 256, 1));
  if (hasSe(variant)) out.push(...se("layer25", 256));
  out.push(...detect("layer22", [64, 128, 256], nc));
  return out;
}
