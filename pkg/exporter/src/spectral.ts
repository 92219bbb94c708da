/**
 * Small dense spectral-norm helper, used by the test suite to compute an
 * operator-norm product on this side of the fence, independent of the
 * consumer's implementation.
 */

export type Matrix = { rows: number; cols: number; data: Float64Array };

export function matrixFromF32(shape: number[], values: Float32Array): Matrix {
  const [rows, cols] = shape;
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) data[i] = values[i];
  return { rows, cols, data };
}

function applyAtA(m: Matrix, v: Float64Array, tmp: Float64Array): Float64Array {
  // tmp = A v
  for (let r = 0; r < m.rows; r++) {
    let acc = 0;
    const base = r * m.cols;
    for (let c = 0; c < m.cols; c++) acc += m.data[base + c] * v[c];
    tmp[r] = acc;
  }
  // out = A^T tmp
  const out = new Float64Array(m.cols);
  for (let r = 0; r < m.rows; r++) {
    const base = r * m.cols;
    const t = tmp[r];
    for (let c = 0; c < m.cols; c++) out[c] += m.data[base + c] * t;
  }
  return out;
}

function norm(v: Float64Array): number {
  let acc = 0;
  for (const x of v) acc += x * x;
  return Math.sqrt(acc);
}

/** Top singular value by power iteration on A^T A with a fixed seed. */
export function spectralNorm(m: Matrix, iters = 5000, tol = 1e-13): number {
  let v = new Float64Array(m.cols);
  // deterministic start: simple LCG so runs are reproducible without deps
  let state = 0x2545f491;
  for (let i = 0; i < v.length; i++) {
    state = (1103515245 * state + 12345) & 0x7fffffff;
    v[i] = state / 0x7fffffff - 0.5;
  }
  let nv = norm(v);
  if (nv === 0) return 0;
  for (let i = 0; i < v.length; i++) v[i] /= nv;
  const tmp = new Float64Array(m.rows);
  let prev = -1;
  let stall = 0;
  for (let it = 0; it < iters; it++) {
    const w = applyAtA(m, v, tmp);
    const nw = norm(w);
    if (nw === 0) return 0;
    for (let i = 0; i < v.length; i++) v[i] = w[i] / nw;
    const s = Math.sqrt(nw); // converges to the top singular value; monitor only
    if (Math.abs(s - prev) <= tol * s) {
      stall += 1;
      if (stall >= 2) break;
    } else {
      stall = 0;
    }
    prev = s;
  }
  // one clean readout: ||A v||
  for (let r = 0; r < m.rows; r++) {
    let acc = 0;
    const base = r * m.cols;
    for (let c = 0; c < m.cols; c++) acc += m.data[base + c] * v[c];
    tmp[r] = acc;
  }
  return norm(tmp);
}
