import { ApiError } from './api';
import type { Store } from './state';

export interface PanelCallbacks {
  onApply(): void;
  onReset(): void;
}

/** Scenario controls: one 0.25x-2x multiplier slider per static feature,
 * absolute-value overrides for the selected zone, Apply and Reset. API
 * validation errors are surfaced inline at the offending control. */
export function createScenarioPanel(
  container: HTMLElement,
  store: Store,
  callbacks: PanelCallbacks,
): { render(): void; showError(error: unknown): void } {
  container.textContent = '';
  container.className = 'scenario-panel';

  const sliderBox = document.createElement('div');
  sliderBox.className = 'sliders';
  const overrideBox = document.createElement('div');
  overrideBox.className = 'overrides';
  const buttonRow = document.createElement('div');
  buttonRow.className = 'buttons';

  const applyButton = document.createElement('button');
  applyButton.textContent = 'Apply';
  applyButton.className = 'apply';
  applyButton.addEventListener('click', () => callbacks.onApply());

  const resetButton = document.createElement('button');
  resetButton.textContent = 'Reset';
  resetButton.className = 'reset';
  resetButton.addEventListener('click', () => callbacks.onReset());

  const globalError = document.createElement('p');
  globalError.className = 'error global-error';

  buttonRow.append(applyButton, resetButton);
  container.append(sliderBox, overrideBox, buttonRow, globalError);

  const errorSlots = new Map<string, HTMLElement>();

  function buildSliders(): void {
    sliderBox.textContent = '';
    errorSlots.clear();
    for (const feature of store.staticFeatures()) {
      const row = document.createElement('div');
      row.className = 'slider-row';
      row.dataset.feature = feature;

      const label = document.createElement('label');
      label.textContent = feature;

      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = '0.25';
      slider.max = '2';
      slider.step = '0.05';
      slider.value = String(store.draft.scales[feature] ?? 1);
      slider.dataset.feature = feature;
      slider.addEventListener('input', () => {
        store.setScale(feature, Number(slider.value));
        readout.textContent = `x${slider.value}`;
      });

      const readout = document.createElement('span');
      readout.className = 'readout';
      readout.textContent = `x${slider.value}`;

      const error = document.createElement('span');
      error.className = 'error';
      errorSlots.set(feature, error);

      row.append(label, slider, readout, error);
      sliderBox.appendChild(row);
    }
  }

  function buildOverrides(): void {
    overrideBox.textContent = '';
    const zoneId = store.selectedZone;
    const heading = document.createElement('h3');
    if (!zoneId) {
      heading.textContent = 'Click a zone to add per-zone overrides';
      overrideBox.appendChild(heading);
      return;
    }
    heading.textContent = `Overrides for ${zoneId}`;
    overrideBox.appendChild(heading);
    const zone = store.zones?.features.find(
      (f) => f.properties.zone_id === zoneId,
    );
    if (!zone) return;
    for (const feature of store.staticFeatures()) {
      const row = document.createElement('div');
      row.className = 'override-row';
      row.dataset.feature = feature;

      const label = document.createElement('label');
      label.textContent = feature;

      const input = document.createElement('input');
      input.type = 'number';
      input.step = 'any';
      const override = store.draft.overrides[zoneId]?.[feature];
      const baseline = zone.properties[feature];
      input.value = String(override ?? baseline ?? '');
      input.dataset.feature = feature;
      input.addEventListener('change', () => {
        const parsed = Number(input.value);
        if (Number.isFinite(parsed)) {
          store.setOverride(zoneId, feature, parsed);
        } else {
          store.clearOverride(zoneId, feature);
        }
      });

      row.append(label, input);
      overrideBox.appendChild(row);
    }
  }

  function clearErrors(): void {
    globalError.textContent = '';
    for (const slot of errorSlots.values()) {
      slot.textContent = '';
    }
  }

  return {
    render(): void {
      buildSliders();
      buildOverrides();
      clearErrors();
      applyButton.disabled = store.pending;
    },
    showError(error: unknown): void {
      clearErrors();
      if (error instanceof ApiError) {
        // "perturbations.N.feature: ..." -> attach at that feature's control
        const match = /perturbations\.(\d+)\./.exec(error.detail);
        const featureMatch = /feature '([^']+)'/.exec(error.detail);
        const feature = featureMatch?.[1];
        if (match && feature && errorSlots.has(feature)) {
          errorSlots.get(feature)!.textContent = error.detail;
          return;
        }
        globalError.textContent = error.detail;
        return;
      }
      globalError.textContent = String(error);
    },
  };
}
