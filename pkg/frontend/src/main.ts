import { createApi, type ApiClient } from './api';
import { createChoropleth, type ChoroplethHandle } from './choropleth';
import { createScenarioPanel } from './panel';
import { Store, draftToRequest } from './state';
import { renderDecisionStrip } from './strip';

declare global {
  interface Window {
    AIRTWIN_API?: string;
  }
}

export interface AppHandle {
  store: Store;
  /** Resolves when the in-flight evaluation (if any) has settled. */
  whenIdle(): Promise<void>;
}

/** Wire the scenario explorer into `root` against the given API client.
 * All numbers shown come from API responses; this module only routes. */
export async function bootstrap(root: HTMLElement, api: ApiClient): Promise<AppHandle> {
  root.innerHTML = `
    <header>
      <h1>NO2 scenario explorer</h1>
      <div class="toolbar">
        <button id="overlay-values" class="active">pollution</button>
        <button id="overlay-decisions">decisions</button>
      </div>
    </header>
    <main>
      <section id="map"></section>
      <aside id="panel"></aside>
    </main>
    <footer id="strip"></footer>
  `;
  const mapBox = root.querySelector<HTMLElement>('#map')!;
  const panelBox = root.querySelector<HTMLElement>('#panel')!;
  const stripBox = root.querySelector<HTMLElement>('#strip')!;
  const valuesButton = root.querySelector<HTMLButtonElement>('#overlay-values')!;
  const decisionsButton = root.querySelector<HTMLButtonElement>('#overlay-decisions')!;

  const store = new Store();
  let inflight: Promise<void> = Promise.resolve();

  const [zones, catalog, policy] = await Promise.all([
    api.getZones(),
    api.getCatalog(),
    api.getPolicy(),
  ]);
  store.zones = zones;
  store.catalog = catalog;
  store.policy = policy;

  const map: ChoroplethHandle = createChoropleth(mapBox, zones, {
    onSelect: (zoneId) => store.selectZone(zoneId),
  });

  const panel = createScenarioPanel(panelBox, store, {
    onApply: () => {
      inflight = evaluate();
    },
    onReset: () => {
      store.resetDraft();
      inflight = evaluate();
    },
  });

  function currentValues(): Record<string, number> {
    return store.evaluation ? store.evaluation.values : store.baselineValues();
  }

  function paint(): void {
    if (store.overlay === 'decisions' && store.evaluation) {
      map.setDecisions(store.evaluation.decisions, store.policy?.labels ?? []);
    } else {
      map.setValues(currentValues());
    }
    map.highlight(store.evaluation?.changed_zones ?? []);
    map.setSelected(store.selectedZone);
    renderDecisionStrip(stripBox, store.evaluation, store.policy);
    panel.render();
    valuesButton.classList.toggle('active', store.overlay === 'values');
    decisionsButton.classList.toggle('active', store.overlay === 'decisions');
  }

  async function evaluate(): Promise<void> {
    const seq = store.beginRequest();
    const request = draftToRequest(store.draft);
    try {
      const response = await api.postScenario(request);
      store.acceptEvaluation(seq, response);
    } catch (error) {
      if (store.rejectEvaluation(seq, String(error))) {
        panel.showError(error);
      }
    }
  }

  valuesButton.addEventListener('click', () => store.setOverlay('values'));
  decisionsButton.addEventListener('click', () => store.setOverlay('decisions'));

  store.subscribe(paint);
  paint();

  // baseline evaluation populates the decision strip on load
  inflight = evaluate();
  await inflight;

  return {
    store,
    whenIdle: () => inflight,
  };
}

function autoStart(): void {
  const root = document.getElementById('app');
  if (!root) return;
  const base = window.AIRTWIN_API ?? 'http://127.0.0.1:8113/api';
  void bootstrap(root, createApi(base));
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  autoStart();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', autoStart);
}
