/**
 * Checkpoint -> LNM conversion.
 *
 * Weight bytes are copied verbatim from the checkpoint (the exporter never
 * recomputes or transposes values); conv kernels are required to already be
 * in [out, in, kh, kw] order. The layer chain is validated the same way the
 * consumer validates it: alternating affine/activation, structurally equal
 * adjacent shapes.
 */

import { CheckpointError, ShapeChainBroken, UnsupportedLayer } from './errors.js';
import { ActivationLayer, assembleLnm, BlobWriter, LnmLayer } from './lnm.js';
import { MapEntry } from './mapspec.js';
import { asFloat32Array, TensorMap, TensorSlice } from './safetensors.js';

type Shape = number[];

function shapesEqual(a: Shape, b: Shape): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

function fetch(tensors: TensorMap, name: string, layer: number): TensorSlice {
  const t = tensors.get(name);
  if (t === undefined) {
    throw new CheckpointError(`layer ${layer}: checkpoint has no tensor ${name}`);
  }
  if (t.dtype !== 'F32') {
    throw new UnsupportedLayer(`layer ${layer}: tensor ${name} has dtype ${t.dtype}, only F32 is supported`);
  }
  const values = asFloat32Array(t);
  for (const v of values) {
    if (!Number.isFinite(v)) {
      throw new CheckpointError(`layer ${layer}: tensor ${name} contains NaN or Inf`);
    }
  }
  return t;
}

export function buildLnm(tensors: TensorMap, entries: MapEntry[]): Buffer {
  const blob = new BlobWriter();
  const layers: LnmLayer[] = [];
  let shape: Shape | null = null; // running output shape of the affine chain
  let wantAffine = true;
  entries.forEach((entry, i) => {
    if (wantAffine && entry.kind === 'activation') {
      throw new ShapeChainBroken(`layer ${i}: expected an affine layer, got an activation`);
    }
    if (!wantAffine && entry.kind !== 'activation') {
      throw new ShapeChainBroken(`layer ${i}: affine layers must alternate with activations`);
    }
    if (entry.kind === 'dense') {
      const weight = fetch(tensors, entry.weight, i);
      if (weight.shape.length !== 2) {
        throw new CheckpointError(`layer ${i}: dense weight must be 2-D`);
      }
      const [out, inDim] = weight.shape;
      if (shape !== null && !shapesEqual(shape, [inDim])) {
        throw new ShapeChainBroken(
          `layer ${i}: expects input shape [${inDim}], chain carries [${shape}]`,
        );
      }
      let bias = null;
      if (entry.bias !== null) {
        const b = fetch(tensors, entry.bias, i);
        if (!shapesEqual(b.shape, [out])) {
          throw new CheckpointError(`layer ${i}: bias shape must be [${out}]`);
        }
        bias = b;
      }
      layers.push({
        kind: 'dense',
        in: inDim,
        out,
        weight: blob.add(weight.data, weight.shape),
        bias: bias === null ? null : blob.add(bias.data, bias.shape),
      });
      shape = [out];
    } else if (entry.kind === 'conv2d') {
      const weight = fetch(tensors, entry.weight, i);
      if (weight.shape.length !== 4) {
        throw new CheckpointError(`layer ${i}: conv2d weight must be [out, in, kh, kw]`);
      }
      const [outC, inC, kh, kw] = weight.shape;
      let inputHw: [number, number] | null = entry.input_hw ?? null;
      if (shape !== null) {
        if (shape.length !== 3 || shape[0] !== inC) {
          throw new ShapeChainBroken(
            `layer ${i}: expects ${inC}-channel image input, chain carries [${shape}]`,
          );
        }
        if (inputHw !== null && !shapesEqual(inputHw, [shape[1], shape[2]])) {
          throw new ShapeChainBroken(
            `layer ${i}: input_hw [${inputHw}] disagrees with the chain [${shape[1]},${shape[2]}]`,
          );
        }
        inputHw = [shape[1], shape[2]];
      }
      if (inputHw === null) {
        throw new CheckpointError(`layer ${i}: the first conv2d needs input_hw`);
      }
      const [sh, sw] = entry.stride;
      const [ph, pw] = entry.padding;
      if (sh < 1 || sw < 1 || ph < 0 || pw < 0) {
        throw new CheckpointError(`layer ${i}: stride must be >= 1 and padding >= 0`);
      }
      const oh = Math.floor((inputHw[0] + 2 * ph - kh) / sh) + 1;
      const ow = Math.floor((inputHw[1] + 2 * pw - kw) / sw) + 1;
      if (oh < 1 || ow < 1) {
        throw new ShapeChainBroken(
          `layer ${i}: ${kh}x${kw} kernel does not fit a ${inputHw[0]}x${inputHw[1]} input`,
        );
      }
      let bias = null;
      if (entry.bias !== null) {
        const b = fetch(tensors, entry.bias, i);
        if (!shapesEqual(b.shape, [outC])) {
          throw new CheckpointError(`layer ${i}: bias shape must be [${outC}]`);
        }
        bias = b;
      }
      layers.push({
        kind: 'conv2d',
        in_channels: inC,
        out_channels: outC,
        kernel: [kh, kw],
        stride: [sh, sw],
        padding: [ph, pw],
        input_hw: [inputHw[0], inputHw[1]],
        weight: blob.add(weight.data, weight.shape),
        bias: bias === null ? null : blob.add(bias.data, bias.shape),
      });
      shape = [outC, oh, ow];
    } else {
      const layer: ActivationLayer = { kind: 'activation', name: entry.name };
      if (entry.alpha !== undefined) {
        layer.alpha = entry.alpha;
      }
      layers.push(layer);
    }
    wantAffine = entry.kind === 'activation';
  });
  if (wantAffine) {
    throw new ShapeChainBroken('the layer stack must end with an affine layer');
  }
  return assembleLnm(layers, blob.bytes());
}
