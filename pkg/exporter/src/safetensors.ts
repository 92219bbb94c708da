/**
 * Minimal safetensors reader/writer.
 *
 * Layout: 8-byte little-endian header length, a JSON header mapping tensor
 * names to {dtype, shape, data_offsets: [begin, end]} (offsets relative to
 * the data section), then the raw tensor bytes.
 */

import { CheckpointError } from './errors.js';

export interface TensorSlice {
  dtype: string;
  shape: number[];
  /** Raw bytes, unparsed, so downstream copies stay bit-exact. */
  data: Buffer;
}

export type TensorMap = Map<string, TensorSlice>;

export function parseSafetensors(buf: Buffer): TensorMap {
  if (buf.length < 8) {
    throw new CheckpointError('file too short for a safetensors header');
  }
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (headerLen <= 0 || 8 + headerLen > buf.length) {
    throw new CheckpointError('safetensors header length out of range');
  }
  let header: Record<string, unknown>;
  try {
    header = JSON.parse(buf.subarray(8, 8 + headerLen).toString('utf-8'));
  } catch (err) {
    throw new CheckpointError(`bad safetensors header JSON: ${err}`);
  }
  const data = buf.subarray(8 + headerLen);
  const tensors: TensorMap = new Map();
  for (const [name, raw] of Object.entries(header)) {
    if (name === '__metadata__') continue;
    const entry = raw as { dtype?: string; shape?: number[]; data_offsets?: number[] };
    if (
      typeof entry.dtype !== 'string' ||
      !Array.isArray(entry.shape) ||
      !Array.isArray(entry.data_offsets) ||
      entry.data_offsets.length !== 2
    ) {
      throw new CheckpointError(`malformed tensor entry for ${name}`);
    }
    const [begin, end] = entry.data_offsets;
    if (begin < 0 || end < begin || end > data.length) {
      throw new CheckpointError(`tensor ${name}: data offsets out of range`);
    }
    tensors.set(name, {
      dtype: entry.dtype,
      shape: entry.shape.map((d) => Number(d)),
      data: data.subarray(begin, end),
    });
  }
  return tensors;
}

export interface WriteTensor {
  dtype: string;
  shape: number[];
  data: Buffer;
}

/** Serialize tensors in insertion order (used by tests to build fixtures). */
export function writeSafetensors(tensors: Map<string, WriteTensor>): Buffer {
  const header: Record<string, { dtype: string; shape: number[]; data_offsets: [number, number] }> = {};
  const chunks: Buffer[] = [];
  let offset = 0;
  for (const [name, t] of tensors) {
    header[name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + t.data.length],
    };
    chunks.push(t.data);
    offset += t.data.length;
  }
  const headerBuf = Buffer.from(JSON.stringify(header), 'utf-8');
  const len = Buffer.alloc(8);
  len.writeBigUInt64LE(BigInt(headerBuf.length), 0);
  return Buffer.concat([len, headerBuf, ...chunks]);
}

export function asFloat32Array(t: TensorSlice): Float32Array {
  const count = t.shape.reduce((a, b) => a * b, 1);
  if (t.data.length !== 4 * count) {
    throw new CheckpointError('tensor byte length disagrees with its shape');
  }
  // copy to guarantee 4-byte alignment regardless of the parent buffer
  const aligned = Buffer.alloc(t.data.length);
  t.data.copy(aligned);
  return new Float32Array(aligned.buffer, aligned.byteOffset, count);
}
