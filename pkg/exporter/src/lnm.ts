/**
 * LNM container writer.
 *
 * A file is a canonical JSON manifest (version 1, f32, little-endian), the
 * two-byte separator "\n\0", then the weight blob: raw little-endian
 * float32 tensors packed in layer order at 4-byte-aligned offsets.
 */

export interface TensorRef {
  offset: number;
  shape: number[];
}

export interface DenseLayer {
  kind: 'dense';
  in: number;
  out: number;
  weight: TensorRef;
  bias: TensorRef | null;
}

export interface Conv2dLayer {
  kind: 'conv2d';
  in_channels: number;
  out_channels: number;
  kernel: [number, number];
  stride: [number, number];
  padding: [number, number];
  input_hw: [number, number];
  weight: TensorRef;
  bias: TensorRef | null;
}

export interface ActivationLayer {
  kind: 'activation';
  name: string;
  alpha?: number;
}

export type LnmLayer = DenseLayer | Conv2dLayer | ActivationLayer;

export interface LnmManifest {
  version: 1;
  dtype: 'f32';
  byte_order: 'little';
  layers: LnmLayer[];
}

export const SEPARATOR = Buffer.from('\n\0', 'latin1');

/** JSON with recursively sorted object keys, no whitespace. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(',')}]`;
  }
  if (value !== null && typeof value === 'object') {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
    return `{${entries.join(',')}}`;
  }
  return JSON.stringify(value);
}

export class BlobWriter {
  private chunks: Buffer[] = [];
  private offset = 0;

  /** Append raw f32 bytes; returns the manifest tensor reference. */
  add(data: Buffer, shape: number[]): TensorRef {
    if (data.length % 4 !== 0) {
      throw new Error('blob chunks must be whole float32 words');
    }
    const ref = { offset: this.offset, shape };
    this.chunks.push(data);
    this.offset += data.length;
    return ref;
  }

  bytes(): Buffer {
    return Buffer.concat(this.chunks);
  }
}

export function assembleLnm(layers: LnmLayer[], blob: Buffer): Buffer {
  const manifest: LnmManifest = {
    version: 1,
    dtype: 'f32',
    byte_order: 'little',
    layers,
  };
  return Buffer.concat([
    Buffer.from(canonicalJson(manifest), 'utf-8'),
    SEPARATOR,
    blob,
  ]);
}
