/**
 * The engine's checkpoint binary format (little-endian throughout):
 *
 *   magic   8 bytes  "CIBSE1\0\0"
 *   version u32      (= 1)
 *   count   u32      number of entries
 *   entry*:          u16 name length, UTF-8 name, u8 rank,
 *                    rank x u32 dims, prod(dims) x f32 payload
 *
 * Names must be unique and the file length is consumed exactly.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

export type TensorMap = Map<string, Tensor>;

const MAGIC = Buffer.from("CIBSE1\0\0", "latin1");
const FORMAT_VERSION = 1;

function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function encodeCheckpoint(tensors: TensorMap): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(16);
  MAGIC.copy(head, 0);
  head.writeUInt32LE(FORMAT_VERSION, 8);
  head.writeUInt32LE(tensors.size, 12);
  parts.push(head);
  for (const [name, t] of tensors) {
    if (numel(t.shape) !== t.data.length) {
      throw new Error(`tensor ${name}: shape ${t.shape} does not match ${t.data.length} values`);
    }
    const nameBytes = Buffer.from(name, "utf-8");
    const meta = Buffer.alloc(2 + nameBytes.length + 1 + 4 * t.shape.length);
    meta.writeUInt16LE(nameBytes.length, 0);
    nameBytes.copy(meta, 2);
    meta.writeUInt8(t.shape.length, 2 + nameBytes.length);
    t.shape.forEach((d, i) => meta.writeUInt32LE(d, 2 + nameBytes.length + 1 + 4 * i));
    const payload = Buffer.alloc(4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) payload.writeFloatLE(t.data[i], 4 * i);
    parts.push(meta, payload);
  }
  return Buffer.concat(parts);
}

export function decodeCheckpoint(buf: Buffer): TensorMap {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(MAGIC)) {
    throw new Error("not a checkpoint file (bad magic)");
  }
  if (buf.length < 16) throw new Error("truncated header");
  const version = buf.readUInt32LE(8);
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported checkpoint version ${version}`);
  }
  const count = buf.readUInt32LE(12);
  const out: TensorMap = new Map();
  let off = 16;
  for (let i = 0; i < count; i++) {
    if (off + 2 > buf.length) throw new Error(`truncated at entry ${i}`);
    const nameLen = buf.readUInt16LE(off);
    off += 2;
    if (off + nameLen + 1 > buf.length) throw new Error(`truncated name at entry ${i}`);
    const name = buf.subarray(off, off + nameLen).toString("utf-8");
    off += nameLen;
    const rank = buf.readUInt8(off);
    off += 1;
    if (off + 4 * rank > buf.length) throw new Error(`truncated dims of ${name}`);
    const shape: number[] = [];
    for (let d = 0; d < rank; d++) {
      shape.push(buf.readUInt32LE(off));
      off += 4;
    }
    const n = numel(shape);
    if (off + 4 * n > buf.length) throw new Error(`truncated payload of ${name}`);
    const data = new Float32Array(n);
    for (let j = 0; j < n; j++) data[j] = buf.readFloatLE(off + 4 * j);
    off += 4 * n;
    if (out.has(name)) throw new Error(`duplicate tensor name ${name}`);
    out.set(name, { shape, data });
  }
  if (off !== buf.length) throw new Error(`${buf.length - off} trailing bytes`);
  return out;
}

export function writeCheckpoint(path: string, tensors: TensorMap): void {
  writeFileSync(path, encodeCheckpoint(tensors));
}

export function readCheckpoint(path: string): TensorMap {
  return decodeCheckpoint(readFileSync(path));
}
