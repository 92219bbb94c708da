/**
 * MAP.json: the ordered layer list naming which checkpoint tensors feed
 * each LNM layer. It mirrors the LNM layer list without offsets:
 *
 *   {"layers": [
 *     {"kind": "dense", "weight": "fc1.weight", "bias": "fc1.bias"},
 *     {"kind": "activation", "name": "relu"},
 *     {"kind": "conv2d", "weight": "c1.weight", "bias": null,
 *      "stride": [1,1], "padding": [0,0], "input_hw": [8,8]}
 *   ]}
 *
 * input_hw is required on a conv that starts the stack and optional
 * afterwards (derived from the running shape chain).
 */

import { CheckpointError, UnsupportedLayer } from './errors.js';

export interface DenseMapEntry {
  kind: 'dense';
  weight: string;
  bias: string | null;
}

export interface Conv2dMapEntry {
  kind: 'conv2d';
  weight: string;
  bias: string | null;
  stride: [number, number];
  padding: [number, number];
  input_hw?: [number, number];
}

export interface ActivationMapEntry {
  kind: 'activation';
  name: string;
  alpha?: number;
}

export type MapEntry = DenseMapEntry | Conv2dMapEntry | ActivationMapEntry;

const ACTIVATIONS = new Set([
  'relu', 'leaky_relu', 'tanh', 'sigmoid', 'softplus', 'arctan', 'softsign',
  'identity',
]);

function intPair(value: unknown, what: string): [number, number] {
  if (!Array.isArray(value) || value.length !== 2 ||
      !value.every((v) => Number.isInteger(v))) {
    throw new CheckpointError(`${what} must be a pair of integers`);
  }
  return [value[0], value[1]];
}

export function parseMap(doc: unknown): MapEntry[] {
  if (typeof doc !== 'object' || doc === null || !Array.isArray((doc as { layers?: unknown }).layers)) {
    throw new CheckpointError("map document needs a 'layers' list");
  }
  const layers = (doc as { layers: unknown[] }).layers;
  if (layers.length === 0) {
    throw new CheckpointError('map layer list is empty');
  }
  return layers.map((raw, i) => {
    if (typeof raw !== 'object' || raw === null) {
      throw new CheckpointError(`map layer ${i} is not an object`);
    }
    const entry = raw as Record<string, unknown>;
    switch (entry.kind) {
      case 'dense': {
        if (typeof entry.weight !== 'string') {
          throw new CheckpointError(`map layer ${i}: dense needs a weight tensor name`);
        }
        const bias = entry.bias ?? null;
        if (bias !== null && typeof bias !== 'string') {
          throw new CheckpointError(`map layer ${i}: bias must be a name or null`);
        }
        return { kind: 'dense', weight: entry.weight, bias } as DenseMapEntry;
      }
      case 'conv2d': {
        if (typeof entry.weight !== 'string') {
          throw new CheckpointError(`map layer ${i}: conv2d needs a weight tensor name`);
        }
        const bias = entry.bias ?? null;
        if (bias !== null && typeof bias !== 'string') {
          throw new CheckpointError(`map layer ${i}: bias must be a name or null`);
        }
        const out: Conv2dMapEntry = {
          kind: 'conv2d',
          weight: entry.weight,
          bias,
          stride: intPair(entry.stride ?? [1, 1], `map layer ${i} stride`),
          padding: intPair(entry.padding ?? [0, 0], `map layer ${i} padding`),
        };
        if (entry.input_hw !== undefined) {
          out.input_hw = intPair(entry.input_hw, `map layer ${i} input_hw`);
        }
        return out;
      }
      case 'activation': {
        if (typeof entry.name !== 'string' || !ACTIVATIONS.has(entry.name)) {
          throw new UnsupportedLayer(`map layer ${i}: unknown activation ${String(entry.name)}`);
        }
        const out: ActivationMapEntry = { kind: 'activation', name: entry.name };
        if (entry.alpha !== undefined) {
          if (typeof entry.alpha !== 'number' || entry.name !== 'leaky_relu') {
            throw new CheckpointError(`map layer ${i}: alpha is only valid on leaky_relu`);
          }
          out.alpha = entry.alpha;
        }
        return out;
      }
      default:
        throw new UnsupportedLayer(
          `map layer ${i}: unsupported layer kind ${String(entry.kind)}`,
        );
    }
  });
}
