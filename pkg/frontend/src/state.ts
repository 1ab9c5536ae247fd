import type {
  CatalogResponse,
  Perturbation,
  Policy,
  ScenarioRequest,
  ScenarioResponse,
  ZonesResponse,
} from './types';

/** Draft scenario: global multipliers per feature plus per-zone absolute
 * overrides. Always serializable to a valid POST body. */
export interface ScenarioDraft {
  scales: Record<string, number>;
  overrides: Record<string, Record<string, number>>;
}

export function emptyDraft(): ScenarioDraft {
  return { scales: {}, overrides: {} };
}

export function draftIsEmpty(draft: ScenarioDraft): boolean {
  return (
    Object.values(draft.scales).every((v) => v === 1) &&
    Object.keys(draft.overrides).length === 0
  );
}

/** Serialize the draft: sliders become global `scale` perturbations,
 * zone overrides become single-zone `set` perturbations. */
export function draftToRequest(draft: ScenarioDraft): ScenarioRequest {
  const perturbations: Perturbation[] = [];
  for (const [feature, amount] of Object.entries(draft.scales)) {
    if (amount !== 1) {
      perturbations.push({ feature, op: 'scale', amount });
    }
  }
  for (const [zone, features] of Object.entries(draft.overrides)) {
    for (const [feature, amount] of Object.entries(features)) {
      perturbations.push({ feature, op: 'set', amount, zones: [zone] });
    }
  }
  return { perturbations };
}

export type Overlay = 'values' | 'decisions';

type Listener = () => void;

/** Central UI state. Scenario responses carry the sequence number of the
 * request that produced them; anything but the latest issued request is
 * discarded, so the evaluation shown always matches the newest draft. */
export class Store {
  zones: ZonesResponse | null = null;
  catalog: CatalogResponse | null = null;
  policy: Policy | null = null;
  evaluation: ScenarioResponse | null = null;
  draft: ScenarioDraft = emptyDraft();
  selectedZone: string | null = null;
  overlay: Overlay = 'values';
  pending = false;
  error: string | null = null;

  private seq = 0;
  private acceptedSeq = 0;
  private listeners: Listener[] = [];

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  beginRequest(): number {
    this.seq += 1;
    this.pending = true;
    this.error = null;
    return this.seq;
  }

  get latestSeq(): number {
    return this.seq;
  }

  /** Accept only the response to the most recently issued request. */
  acceptEvaluation(seq: number, evaluation: ScenarioResponse): boolean {
    if (seq !== this.seq) {
      return false; // stale: a newer request is in flight or already shown
    }
    this.acceptedSeq = seq;
    this.evaluation = evaluation;
    this.pending = false;
    this.notify();
    return true;
  }

  rejectEvaluation(seq: number, message: string): boolean {
    if (seq !== this.seq) {
      return false;
    }
    this.pending = false;
    this.error = message;
    this.notify();
    return true;
  }

  get lastAcceptedSeq(): number {
    return this.acceptedSeq;
  }

  setScale(feature: string, amount: number): void {
    this.draft.scales[feature] = amount;
    this.notify();
  }

  setOverride(zone: string, feature: string, amount: number): void {
    (this.draft.overrides[zone] ??= {})[feature] = amount;
    this.notify();
  }

  clearOverride(zone: string, feature: string): void {
    const zoneOverrides = this.draft.overrides[zone];
    if (!zoneOverrides) return;
    delete zoneOverrides[feature];
    if (Object.keys(zoneOverrides).length === 0) {
      delete this.draft.overrides[zone];
    }
    this.notify();
  }

  resetDraft(): void {
    this.draft = emptyDraft();
    this.error = null;
    this.notify();
  }

  selectZone(zoneId: string | null): void {
    this.selectedZone = zoneId;
    this.notify();
  }

  setOverlay(overlay: Overlay): void {
    this.overlay = overlay;
    this.notify();
  }

  /** Static features (the ones scenarios may perturb). */
  staticFeatures(): string[] {
    if (!this.catalog) return [];
    return this.catalog.entries
      .filter((e) => e.source === 'static')
      .map((e) => e.name);
  }

  /** Baseline per-zone values straight from the zones response. */
  baselineValues(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const feature of this.zones?.features ?? []) {
      out[feature.properties.zone_id] = feature.properties.no2_pred;
    }
    return out;
  }
}
