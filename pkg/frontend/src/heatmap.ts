// Client-side saliency overlay: align-corners bilinear upsample of the
// server's normalized grid (row-major floats) and the fixed 3-stop
// colormap blue(0) -> yellow(0.5) -> red(1). Compositing uses per-pixel
// alpha = strength * value, so drawing the RGBA buffer source-over the
// video reproduces the server's blend.

export function upsampleBilinear(
  grid: number[],
  gridH: number,
  gridW: number,
  outH: number,
  outW: number,
): Float32Array {
  if (grid.length !== gridH * gridW) {
    throw new Error(`grid length ${grid.length} != ${gridH}x${gridW}`);
  }
  const out = new Float32Array(outH * outW);
  for (let oy = 0; oy < outH; oy++) {
    const sy = outH > 1 ? (oy * (gridH - 1)) / (outH - 1) : 0;
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, gridH - 1);
    const fy = sy - y0;
    for (let ox = 0; ox < outW; ox++) {
      const sx = outW > 1 ? (ox * (gridW - 1)) / (outW - 1) : 0;
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, gridW - 1);
      const fx = sx - x0;
      const top = grid[y0 * gridW + x0] * (1 - fx) + grid[y0 * gridW + x1] * fx;
      const bot = grid[y1 * gridW + x0] * (1 - fx) + grid[y1 * gridW + x1] * fx;
      out[oy * outW + ox] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

export function colormap(v: number): [number, number, number] {
  const t = Math.min(1, Math.max(0, v));
  let r: number, g: number, b: number;
  if (t < 0.5) {
    const u = t * 2; // blue -> yellow
    r = 255 * u;
    g = 255 * u;
    b = 255 * (1 - u);
  } else {
    const u = (t - 0.5) * 2; // yellow -> red
    r = 255;
    g = 255 * (1 - u);
    b = 0;
  }
  return [Math.floor(r + 0.5), Math.floor(g + 0.5), Math.floor(b + 0.5)];
}

export function overlayRgba(
  grid: number[],
  gridH: number,
  gridW: number,
  outH: number,
  outW: number,
  strength = 0.85,
): Uint8ClampedArray<ArrayBuffer> {
  const values = upsampleBilinear(grid, gridH, gridW, outH, outW);
  const rgba = new Uint8ClampedArray(outH * outW * 4) as Uint8ClampedArray<ArrayBuffer>;
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    const [r, g, b] = colormap(v);
    rgba[i * 4] = r;
    rgba[i * 4 + 1] = g;
    rgba[i * 4 + 2] = b;
    rgba[i * 4 + 3] = Math.floor(255 * strength * v + 0.5);
  }
  return rgba;
}
