import { categoryColor, fitViewport, makeScale } from './scale';
import type { ZonesResponse } from './types';

const SVG_NS = 'http://www.w3.org/2000/svg';

export interface ChoroplethHandle {
  /** Color zones on the sequential scale over the given values. */
  setValues(values: Record<string, number>): void;
  /** Categorical recolor by decision label (null reverts to values). */
  setDecisions(decisions: Record<string, string> | null, labels: string[]): void;
  highlight(zoneIds: string[]): void;
  setSelected(zoneId: string | null): void;
  destroy(): void;
}

export interface ChoroplethOptions {
  width?: number;
  height?: number;
  onSelect?: (zoneId: string) => void;
}

/** Render the zone polygons (planar meters, scaled to the viewport) as an
 * SVG choropleth with a min/mean/max legend. */
export function createChoropleth(
  container: HTMLElement,
  zones: ZonesResponse,
  options: ChoroplethOptions = {},
): ChoroplethHandle {
  container.textContent = '';
  if (!zones.features.length) {
    const empty = document.createElement('p');
    empty.className = 'empty-state';
    empty.textContent = 'No zones loaded.';
    container.appendChild(empty);
    return {
      setValues: () => undefined,
      setDecisions: () => undefined,
      highlight: () => undefined,
      setSelected: () => undefined,
      destroy: () => container.replaceChildren(),
    };
  }

  const width = options.width ?? 720;
  const height = options.height ?? 620;

  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const feature of zones.features) {
    for (const [x, y] of feature.geometry.coordinates[0]) {
      minX = Math.min(minX, x);
      minY = Math.min(minY, y);
      maxX = Math.max(maxX, x);
      maxY = Math.max(maxY, y);
    }
  }
  const view = fitViewport({ minX, minY, maxX, maxY }, width, height);

  const svg = document.createElementNS(SVG_NS, 'svg');
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  svg.setAttribute('class', 'choropleth');

  const paths = new Map<string, SVGPathElement>();
  for (const feature of zones.features) {
    const zoneId = feature.properties.zone_id;
    const ring = feature.geometry.coordinates[0];
    const d =
      ring
        .map(([x, y], i) => {
          const [px, py] = view.toPixel(x, y);
          return `${i === 0 ? 'M' : 'L'}${px.toFixed(2)},${py.toFixed(2)}`;
        })
        .join(' ') + ' Z';
    const path = document.createElementNS(SVG_NS, 'path');
    path.setAttribute('d', d);
    path.setAttribute('class', 'zone');
    path.dataset.zoneId = zoneId;
    path.addEventListener('click', () => options.onSelect?.(zoneId));
    const title = document.createElementNS(SVG_NS, 'title');
    path.appendChild(title);
    svg.appendChild(path);
    paths.set(zoneId, path);
  }
  container.appendChild(svg);

  const legend = document.createElement('div');
  legend.className = 'legend';
  container.appendChild(legend);

  const handle: ChoroplethHandle = {
    setValues(values) {
      const list = zones.features.map((f) => values[f.properties.zone_id]);
      const scale = makeScale(list);
      for (const feature of zones.features) {
        const zoneId = feature.properties.zone_id;
        const value = values[zoneId];
        const path = paths.get(zoneId)!;
        path.setAttribute('fill', scale.color(value));
        path.dataset.value = String(value);
        path.querySelector('title')!.textContent = `${zoneId}: ${value}`;
      }
      legend.innerHTML =
        `<span class="legend-min">min ${scale.min.toFixed(2)}</span>` +
        `<span class="legend-mean">mean ${scale.mean.toFixed(2)}</span>` +
        `<span class="legend-max">max ${scale.max.toFixed(2)}</span>`;
    },
    setDecisions(decisions, labels) {
      if (decisions === null) return;
      for (const feature of zones.features) {
        const zoneId = feature.properties.zone_id;
        const label = decisions[zoneId];
        const path = paths.get(zoneId)!;
        path.setAttribute('fill', categoryColor(labels, label));
        path.dataset.decision = label;
        path.querySelector('title')!.textContent = `${zoneId}: ${label}`;
      }
      legend.innerHTML = labels
        .map(
          (label) =>
            `<span class="legend-cat"><i style="background:${categoryColor(
              labels,
              label,
            )}"></i>${label}</span>`,
        )
        .join('');
    },
    highlight(zoneIds) {
      const wanted = new Set(zoneIds);
      for (const [zoneId, path] of paths) {
        path.classList.toggle('changed', wanted.has(zoneId));
      }
    },
    setSelected(zoneId) {
      for (const [id, path] of paths) {
        path.classList.toggle('selected', id === zoneId);
      }
    },
    destroy() {
      container.replaceChildren();
      paths.clear();
    },
  };
  return handle;
}
