/** Rendering scales: sequential colors for values, categorical colors for
 * decision labels, and the planar-meters -> pixels viewport transform. */

const VIRIDIS_STOPS: Array<[number, number, number]> = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

/** Sequential colormap on t in [0, 1]. */
export function sequentialColor(t: number): string {
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (VIRIDIS_STOPS.length - 1);
  const i = Math.min(VIRIDIS_STOPS.length - 2, Math.floor(pos));
  const frac = pos - i;
  const [r1, g1, b1] = VIRIDIS_STOPS[i];
  const [r2, g2, b2] = VIRIDIS_STOPS[i + 1];
  return `rgb(${Math.round(lerp(r1, r2, frac))}, ${Math.round(
    lerp(g1, g2, frac),
  )}, ${Math.round(lerp(b1, b2, frac))})`;
}

export interface ValueScale {
  min: number;
  max: number;
  mean: number;
  color(value: number): string;
}

/** Scale over the values being displayed; uniform values map to mid-color. */
export function makeScale(values: number[]): ValueScale {
  const min = Math.min(...values);
  const max = Math.max(...values);
  const mean = values.reduce((a, b) => a + b, 0) / values.length;
  const span = max - min;
  return {
    min,
    max,
    mean,
    color: (value) => sequentialColor(span === 0 ? 0.5 : (value - min) / span),
  };
}

export const CATEGORY_COLORS = [
  '#4d9a6a',
  '#e0a63a',
  '#c4473d',
  '#5a6fc4',
  '#9a5aa8',
  '#3aa8b8',
];

export function categoryColor(labels: string[], label: string): string {
  const index = Math.max(0, labels.indexOf(label));
  return CATEGORY_COLORS[index % CATEGORY_COLORS.length];
}

export interface ViewTransform {
  toPixel(x: number, y: number): [number, number];
  width: number;
  height: number;
}

/** Fit a planar bounding box into a pixel viewport, preserving aspect and
 * flipping y (planar y grows north, pixels grow down). */
export function fitViewport(
  bbox: { minX: number; minY: number; maxX: number; maxY: number },
  width: number,
  height: number,
  pad = 8,
): ViewTransform {
  const spanX = bbox.maxX - bbox.minX || 1;
  const spanY = bbox.maxY - bbox.minY || 1;
  const scale = Math.min((width - 2 * pad) / spanX, (height - 2 * pad) / spanY);
  const offsetX = (width - spanX * scale) / 2;
  const offsetY = (height - spanY * scale) / 2;
  return {
    width,
    height,
    toPixel: (x, y) => [
      offsetX + (x - bbox.minX) * scale,
      height - offsetY - (y - bbox.minY) * scale,
    ],
  };
}
