#!/usr/bin/env node
/**
 * lnm-export --checkpoint model.safetensors --map map.json --out model.lnm
 *
 * Exit codes: 0 success, 2 input or conversion errors.
 */

import { readFileSync, writeFileSync } from 'fs';

import { ExportError } from './errors.js';
import { buildLnm } from './export.js';
import { parseMap } from './mapspec.js';
import { parseSafetensors } from './safetensors.js';

interface Args {
  checkpoint: string;
  map: string;
  out: string;
}

function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = {};
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--checkpoint':
        args.checkpoint = argv[++i];
        break;
      case '--map':
        args.map = argv[++i];
        break;
      case '--out':
        args.out = argv[++i];
        break;
      case '--help':
      case '-h':
        console.log('usage: lnm-export --checkpoint PATH --map MAP.json --out MODEL.lnm');
        process.exit(0);
        break;
      default:
        throw new ExportError(`unknown argument ${argv[i]}`);
    }
  }
  if (!args.checkpoint || !args.map || !args.out) {
    throw new ExportError('--checkpoint, --map and --out are all required');
  }
  return args as Args;
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const tensors = parseSafetensors(readFileSync(args.checkpoint));
    const entries = parseMap(JSON.parse(readFileSync(args.map, 'utf-8')));
    writeFileSync(args.out, buildLnm(tensors, entries));
    console.log(`wrote ${args.out} (${entries.length} layers)`);
    return 0;
  } catch (err) {
    if (err instanceof ExportError || err instanceof SyntaxError ||
        (err as NodeJS.ErrnoException).code !== undefined) {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
