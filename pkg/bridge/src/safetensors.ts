/**
 * Minimal safetensors reader/writer (F32 only) — the portable export format
 * of the mainstream training ecosystem: u64 LE header length, JSON header
 * mapping tensor names to {dtype, shape, data_offsets}, then the raw buffer.
 */

import { readFileSync, writeFileSync } from "node:fs";
import type { Tensor, TensorMap } from "./checkpoint.js";

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export function decodeSafetensors(buf: Buffer): TensorMap {
  if (buf.length < 8) throw new Error("safetensors: file too short");
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (8 + headerLen > buf.length) throw new Error("safetensors: header overruns file");
  const header = JSON.parse(buf.subarray(8, 8 + headerLen).toString("utf-8")) as Record<
    string,
    HeaderEntry
  >;
  const base = 8 + headerLen;
  const out: TensorMap = new Map();
  for (const [name, entry] of Object.entries(header)) {
    if (name === "__metadata__") continue;
    if (entry.dtype !== "F32") {
      throw new Error(`safetensors: tensor ${name} has dtype ${entry.dtype}, only F32 supported`);
    }
    const [begin, end] = entry.data_offsets;
    const n = entry.shape.reduce((a, b) => a * b, 1);
    if (end - begin !== 4 * n) {
      throw new Error(`safetensors: tensor ${name} payload ${end - begin} bytes, expected ${4 * n}`);
    }
    if (base + end > buf.length) throw new Error(`safetensors: tensor ${name} overruns file`);
    const data = new Float32Array(n);
    for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(base + begin + 4 * i);
    out.set(name, { shape: entry.shape.slice(), data });
  }
  return out;
}

export function encodeSafetensors(tensors: TensorMap): Buffer {
  const header: Record<string, HeaderEntry> = {};
  let offset = 0;
  const payloads: Buffer[] = [];
  for (const [name, t] of tensors) {
    const bytes = Buffer.alloc(4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) bytes.writeFloatLE(t.data[i], 4 * i);
    header[name] = { dtype: "F32", shape: t.shape.slice(), data_offsets: [offset, offset + bytes.length] };
    offset += bytes.length;
    payloads.push(bytes);
  }
  const headerBytes = Buffer.from(JSON.stringify(header), "utf-8");
  const head = Buffer.alloc(8);
  head.writeBigUInt64LE(BigInt(headerBytes.length), 0);
  return Buffer.concat([head, headerBytes, ...payloads]);
}

export function readSafetensors(path: string): TensorMap {
  return decodeSafetensors(readFileSync(path));
}

export function writeSafetensors(path: string, tensors: TensorMap): void {
  writeFileSync(path, encodeSafetensors(tensors));
}

export type { Tensor, TensorMap };
