import { describe, expect, it } from 'vitest';

import { ApiError, createApi } from '../src/api';
import { makeFetchMock } from './helpers';
import evalBaseline from './fixtures/eval_baseline.json';
import zonesFixture from './fixtures/zones.json';

describe('api client', () => {
  it('fetches zones from the configured base url', async () => {
    const mock = makeFetchMock([{ body: evalBaseline }]);
    const api = createApi('http://twin.example/api', mock.fetch);
    const zones = await api.getZones();
    expect(zones.features).toHaveLength(zonesFixture.features.length);
    expect(mock.calls[0].url).toBe('http://twin.example/api/zones');
  });

  it('posts scenario bodies as JSON', async () => {
    const mock = makeFetchMock([{ body: evalBaseline }]);
    const api = createApi('/api', mock.fetch);
    await api.postScenario({
      perturbations: [{ feature: 'income', op: 'scale', amount: 0.5 }],
    });
    expect(mock.scenarioRequests[0].perturbations[0].feature).toBe('income');
  });

  it('turns problem bodies into ApiError with status and detail', async () => {
    const mock = makeFetchMock([
      {
        status: 422,
        body: { type: 'about:blank', title: 'Oops', status: 422, detail: 'bad input' },
      },
    ]);
    const api = createApi('/api', mock.fetch);
    await expect(api.postScenario({ perturbations: [] })).rejects.toMatchObject({
      status: 422,
      detail: 'bad input',
      title: 'Oops',
    });
    try {
      await api.postScenario({ perturbations: [] });
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
    }
  });
});
