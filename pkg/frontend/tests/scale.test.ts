import { describe, expect, it } from 'vitest';

import { categoryColor, fitViewport, makeScale, sequentialColor } from '../src/scale';

describe('sequentialColor', () => {
  it('clamps to the endpoints', () => {
    expect(sequentialColor(-1)).toBe(sequentialColor(0));
    expect(sequentialColor(2)).toBe(sequentialColor(1));
  });

  it('is monotone in luminance-ish green channel', () => {
    const green = (t: number) =>
      Number(/rgb\(\d+, (\d+), \d+\)/.exec(sequentialColor(t))![1]);
    let previous = green(0);
    for (let t = 0.1; t <= 1; t += 0.1) {
      const current = green(t);
      expect(current).toBeGreaterThanOrEqual(previous);
      previous = current;
    }
  });
});

describe('makeScale', () => {
  it('reports min, mean and max of the displayed values', () => {
    const scale = makeScale([2, 4, 9]);
    expect(scale.min).toBe(2);
    expect(scale.max).toBe(9);
    expect(scale.mean).toBeCloseTo(5, 12);
  });

  it('uniform values map everything to one color with min=max', () => {
    const scale = makeScale([3, 3, 3]);
    expect(scale.min).toBe(scale.max);
    expect(scale.color(3)).toBe(scale.color(3));
    expect(scale.color(3)).toBe(sequentialColor(0.5));
  });

  it('colors are ordered consistently with values', () => {
    const scale = makeScale([0, 10]);
    expect(scale.color(0)).toBe(sequentialColor(0));
    expect(scale.color(10)).toBe(sequentialColor(1));
    expect(scale.color(5)).toBe(sequentialColor(0.5));
  });
});

describe('categoryColor', () => {
  it('assigns stable distinct colors by label position', () => {
    const labels = ['a', 'b', 'c'];
    expect(categoryColor(labels, 'a')).not.toBe(categoryColor(labels, 'b'));
    expect(categoryColor(labels, 'c')).toBe(categoryColor(labels, 'c'));
  });
});

describe('fitViewport', () => {
  it('maps the bbox corners inside the viewport with a y-flip', () => {
    const view = fitViewport({ minX: 0, minY: 0, maxX: 100, maxY: 50 }, 200, 100, 0);
    const [x0, y0] = view.toPixel(0, 0);
    const [x1, y1] = view.toPixel(100, 50);
    expect(x0).toBeCloseTo(0);
    expect(y0).toBeCloseTo(100); // south-west corner lands bottom-left
    expect(x1).toBeCloseTo(200);
    expect(y1).toBeCloseTo(0);
  });

  it('preserves aspect ratio', () => {
    const view = fitViewport({ minX: 0, minY: 0, maxX: 100, maxY: 100 }, 300, 100, 0);
    const [xA] = view.toPixel(0, 0);
    const [xB] = view.toPixel(100, 0);
    expect(xB - xA).toBeCloseTo(100); // limited by height
  });
});
