/** End-to-end UI loop against intercepted API traffic (the acceptance
 * path for the frontend): every rendered number must come verbatim from a
 * recorded API response, never from client-side recomputation. */

import { beforeEach, describe, expect, it } from 'vitest';

import { createApi } from '../src/api';
import { bootstrap } from '../src/main';
import type { ScenarioResponse } from '../src/types';
import evalBaseline from './fixtures/eval_baseline.json';
import evalBoundary from './fixtures/eval_boundary.json';
import evalSlider from './fixtures/eval_slider.json';
import policyFixture from './fixtures/policy.json';
import zonesFixture from './fixtures/zones.json';
import { deferred, flushMicrotasks, makeFetchMock } from './helpers';

const baseline = evalBaseline as ScenarioResponse;
const slider = evalSlider as ScenarioResponse;
const boundary = evalBoundary as ScenarioResponse;

function root(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById('app')!;
}

function zonePaths(): SVGPathElement[] {
  return [...document.querySelectorAll<SVGPathElement>('path.zone')];
}

function stripText(selector: string): string {
  return document.querySelector(`#strip ${selector}`)!.textContent ?? '';
}

beforeEach(() => {
  document.body.innerHTML = '';
});

describe('scenario explorer end-to-end', () => {
  it('renders all 100 demo zones with API-fed values and strip', async () => {
    const mock = makeFetchMock([{ body: baseline }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    const paths = zonePaths();
    expect(paths).toHaveLength(100);
    expect(zonesFixture.features).toHaveLength(100);

    // choropleth values are the exact numbers the API returned
    for (const path of paths) {
      const zoneId = path.dataset.zoneId!;
      expect(path.dataset.value).toBe(String(baseline.values[zoneId]));
    }

    // decision strip fields are verbatim API numbers
    expect(stripText('.agreement')).toContain(String(baseline.agreement_vs_baseline));
    expect(stripText('.min-margin')).toContain(String(baseline.min_separation));

    // per-label counts match a recount of the API decisions
    for (const label of policyFixture.labels) {
      const expected = Object.values(baseline.decisions).filter(
        (d) => d === label,
      ).length;
      expect(stripText(`[data-label="${label}"]`)).toBe(`${label}: ${expected}`);
    }

    // only the API was consulted
    for (const call of mock.calls) {
      expect(call.url).toMatch(/^\/api\//);
    }
  });

  it('untouched sliders apply to agreement 1.0', async () => {
    const mock = makeFetchMock([{ body: baseline }, { body: baseline }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    document.querySelector<HTMLButtonElement>('#panel .apply')!.click();
    await app.whenIdle();

    expect(mock.scenarioRequests.at(-1)).toEqual({ perturbations: [] });
    expect(document.querySelector('#strip .agreement')!.getAttribute('data-value')).toBe(
      String(baseline.agreement_vs_baseline),
    );
  });

  it('slider move + apply posts the draft and repaints from the response', async () => {
    const mock = makeFetchMock([{ body: baseline }, { body: slider }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    const control = document.querySelector<HTMLInputElement>(
      'input[type="range"][data-feature="road_density"]',
    )!;
    control.value = '1.5';
    control.dispatchEvent(new Event('input'));
    document.querySelector<HTMLButtonElement>('#panel .apply')!.click();
    await app.whenIdle();

    expect(mock.scenarioRequests.at(-1)).toEqual({
      perturbations: [{ feature: 'road_density', op: 'scale', amount: 1.5 }],
    });
    for (const path of zonePaths()) {
      const zoneId = path.dataset.zoneId!;
      expect(path.dataset.value).toBe(String(slider.values[zoneId]));
    }
    expect(stripText('.agreement')).toContain(String(slider.agreement_vs_baseline));
  });

  it('boundary-crossing scenario highlights exactly the changed zones', async () => {
    const mock = makeFetchMock([{ body: baseline }, { body: boundary }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    const control = document.querySelector<HTMLInputElement>(
      'input[type="range"][data-feature="building_density"]',
    )!;
    control.value = '0.5';
    control.dispatchEvent(new Event('input'));
    document.querySelector<HTMLButtonElement>('#panel .apply')!.click();
    await app.whenIdle();

    expect(boundary.changed_zones.length).toBeGreaterThan(0);
    const highlighted = zonePaths()
      .filter((p) => p.classList.contains('changed'))
      .map((p) => p.dataset.zoneId);
    expect(highlighted.sort()).toEqual([...boundary.changed_zones].sort());
    expect(stripText('.changed-zones')).toContain(
      `(${boundary.changed_zones.length})`,
    );
  });

  it('decision overlay recolors zones by the API-reported labels', async () => {
    const mock = makeFetchMock([{ body: boundary }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    document.querySelector<HTMLButtonElement>('#overlay-decisions')!.click();
    for (const path of zonePaths()) {
      expect(path.dataset.decision).toBe(boundary.decisions[path.dataset.zoneId!]);
    }
    const fills = new Set(zonePaths().map((p) => p.getAttribute('fill')));
    const labelsInUse = new Set(Object.values(boundary.decisions));
    expect(fills.size).toBe(labelsInUse.size);
  });

  it('two rapid applies render only the latest response', async () => {
    const late = deferred<{ body: unknown }>();
    const mock = makeFetchMock([
      { body: baseline },
      { defer: late.promise }, // first apply: slow response
      { body: boundary }, // second apply: fast response
    ]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    const apply = document.querySelector<HTMLButtonElement>('#panel .apply')!;
    apply.click();
    apply.click();
    await app.whenIdle();
    await flushMicrotasks();

    // the slow first response lands now and must be discarded
    late.resolve({ body: slider });
    await flushMicrotasks();

    expect(app.store.evaluation?.scenario_id).toBe(boundary.scenario_id);
    for (const path of zonePaths()) {
      const zoneId = path.dataset.zoneId!;
      expect(path.dataset.value).toBe(String(boundary.values[zoneId]));
    }
  });

  it('unknown-feature 422 is surfaced without breaking the page', async () => {
    const problem = {
      type: 'about:blank',
      title: 'Unknown Feature',
      status: 422,
      detail: "perturbations.0.feature: unknown feature 'ghost'",
    };
    const mock = makeFetchMock([{ body: baseline }, { body: problem, status: 422 }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    document.querySelector<HTMLButtonElement>('#panel .apply')!.click();
    await app.whenIdle();
    await flushMicrotasks();

    const errors = [...document.querySelectorAll('#panel .error')]
      .map((e) => e.textContent)
      .join(' ');
    expect(errors).toContain('ghost');
    // previous evaluation stays on screen
    expect(zonePaths()).toHaveLength(100);
  });

  it('clicking a zone selects it and shows override inputs', async () => {
    const mock = makeFetchMock([{ body: baseline }]);
    const app = await bootstrap(root(), createApi('/api', mock.fetch));
    await app.whenIdle();

    const target = zonePaths()[7];
    target.dispatchEvent(new Event('click'));
    expect(app.store.selectedZone).toBe(target.dataset.zoneId);
    expect(target.classList.contains('selected')).toBe(true);
    const heading = document.querySelector('#panel .overrides h3')!;
    expect(heading.textContent).toContain(target.dataset.zoneId!);
    const inputs = document.querySelectorAll('#panel .override-row input');
    expect(inputs.length).toBeGreaterThan(0);
  });
});
