/** Wire types for the twin service API. */

export interface ZoneProperties {
  zone_id: string;
  no2_pred: number;
  no2_real?: number;
  [feature: string]: number | string | undefined;
}

export interface ZoneFeature {
  type: 'Feature';
  geometry: { type: 'Polygon'; coordinates: number[][][] };
  properties: ZoneProperties;
}

export interface ZonesResponse {
  type: 'FeatureCollection';
  coordinates: string;
  projection_origin: number[];
  snapshot_id?: string;
  features: ZoneFeature[];
}

export interface CatalogEntry {
  name: string;
  source: 'static' | 'lagged';
  moran_i: number | null;
  selected: boolean;
  note: string | null;
}

export interface CatalogResponse {
  entries: CatalogEntry[];
  model_features: string[];
}

export interface Policy {
  policy_id: string;
  thresholds: number[];
  labels: string[];
}

export interface Perturbation {
  feature: string;
  op: 'set' | 'scale' | 'delta';
  amount: number;
  zones?: string[];
}

export interface ScenarioRequest {
  scenario_id?: string;
  perturbations: Perturbation[];
}

export interface ScenarioResponse {
  scenario_id: string;
  policy_id: string;
  model_version: string;
  values: Record<string, number>;
  decisions: Record<string, string>;
  agreement_vs_baseline: number;
  changed_zones: string[];
  min_separation: number;
  margins: Record<string, number>;
}

export interface ProblemBody {
  type: string;
  title: string;
  status: number;
  detail: string;
}
