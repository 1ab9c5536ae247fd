import catalogFixture from './fixtures/catalog.json';
import policyFixture from './fixtures/policy.json';
import zonesFixture from './fixtures/zones.json';
import type { ScenarioRequest } from '../src/types';

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export interface FetchMock {
  fetch: (input: string, init?: RequestInit) => Promise<Response>;
  calls: RecordedCall[];
  /** Bodies of every POST /scenarios request, in order. */
  scenarioRequests: ScenarioRequest[];
}

type ScenarioReply =
  | { status?: number; body: unknown }
  | { defer: Promise<{ status?: number; body: unknown }> };

/** Serve the canned GET fixtures plus a scripted queue of scenario
 * responses; records all traffic so tests can audit it. */
export function makeFetchMock(scenarioReplies: ScenarioReply[]): FetchMock {
  const calls: RecordedCall[] = [];
  const scenarioRequests: ScenarioRequest[] = [];
  let scenarioIndex = 0;

  function json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  async function mockFetch(input: string, init?: RequestInit): Promise<Response> {
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    calls.push({ url: input, method, body });

    if (method === 'GET' && input.endsWith('/zones')) return json(zonesFixture);
    if (method === 'GET' && input.endsWith('/catalog')) return json(catalogFixture);
    if (method === 'GET' && input.endsWith('/policy')) return json(policyFixture);
    if (method === 'POST' && input.endsWith('/scenarios')) {
      scenarioRequests.push(body as ScenarioRequest);
      const reply = scenarioReplies[Math.min(scenarioIndex, scenarioReplies.length - 1)];
      scenarioIndex += 1;
      if ('defer' in reply) {
        const resolved = await reply.defer;
        return json(resolved.body, resolved.status ?? 200);
      }
      return json(reply.body, reply.status ?? 200);
    }
    throw new Error(`unexpected request: ${method} ${input}`);
  }

  return { fetch: mockFetch, calls, scenarioRequests };
}

export function deferred<T>(): { promise: Promise<T>; resolve: (v: T) => void } {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((r) => {
    resolve = r;
  });
  return { promise, resolve };
}

export async function flushMicrotasks(): Promise<void> {
  for (let i = 0; i < 10; i += 1) {
    await Promise.resolve();
  }
}
