import type {
  CatalogResponse,
  Policy,
  ProblemBody,
  ScenarioRequest,
  ScenarioResponse,
  ZonesResponse,
} from './types';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly title = 'Error',
  ) {
    super(`${status} ${title}: ${detail}`);
  }
}

export interface ApiClient {
  getZones(): Promise<ZonesResponse>;
  getCatalog(): Promise<CatalogResponse>;
  getPolicy(): Promise<Policy>;
  putPolicy(policy: Policy): Promise<Policy>;
  postScenario(request: ScenarioRequest): Promise<ScenarioResponse>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = response.statusText;
  let title = 'Error';
  try {
    const body = (await response.json()) as ProblemBody;
    detail = body.detail ?? detail;
    title = body.title ?? title;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail, title);
}

export function createApi(baseUrl: string, fetchImpl?: FetchLike): ApiClient {
  const doFetch: FetchLike = fetchImpl ?? ((input, init) => fetch(input, init));
  const json = { 'Content-Type': 'application/json' };
  return {
    getZones: () => doFetch(`${baseUrl}/zones`).then((r) => parse<ZonesResponse>(r)),
    getCatalog: () => doFetch(`${baseUrl}/catalog`).then((r) => parse<CatalogResponse>(r)),
    getPolicy: () => doFetch(`${baseUrl}/policy`).then((r) => parse<Policy>(r)),
    putPolicy: (policy) =>
      doFetch(`${baseUrl}/policy`, {
        method: 'PUT',
        headers: json,
        body: JSON.stringify(policy),
      }).then((r) => parse<Policy>(r)),
    postScenario: (request) =>
      doFetch(`${baseUrl}/scenarios`, {
        method: 'POST',
        headers: json,
        body: JSON.stringify(request),
      }).then((r) => parse<ScenarioResponse>(r)),
  };
}
