import type { Policy, ScenarioResponse } from './types';

/** Decision summary: per-label zone counts, agreement vs baseline, and the
 * minimum separation margin, all taken verbatim from the evaluation. */
export function renderDecisionStrip(
  container: HTMLElement,
  evaluation: ScenarioResponse | null,
  policy: Policy | null,
): void {
  container.textContent = '';
  container.className = 'decision-strip';
  if (!evaluation) {
    const empty = document.createElement('p');
    empty.className = 'empty-state';
    empty.textContent = 'No evaluation yet.';
    container.appendChild(empty);
    return;
  }

  const counts = document.createElement('div');
  counts.className = 'label-counts';
  const labels = policy?.labels ?? [...new Set(Object.values(evaluation.decisions))];
  for (const label of labels) {
    const n = Object.values(evaluation.decisions).filter((d) => d === label).length;
    const chip = document.createElement('span');
    chip.className = 'count-chip';
    chip.dataset.label = label;
    chip.textContent = `${label}: ${n}`;
    counts.appendChild(chip);
  }

  const agreement = document.createElement('span');
  agreement.className = 'agreement';
  agreement.dataset.value = String(evaluation.agreement_vs_baseline);
  agreement.textContent = `agreement vs baseline: ${evaluation.agreement_vs_baseline}`;

  const margin = document.createElement('span');
  margin.className = 'min-margin';
  margin.dataset.value = String(evaluation.min_separation);
  margin.textContent = `min separation: ${evaluation.min_separation}`;

  const changed = document.createElement('span');
  changed.className = 'changed-zones';
  changed.dataset.count = String(evaluation.changed_zones.length);
  changed.textContent = evaluation.changed_zones.length
    ? `changed zones (${evaluation.changed_zones.length}): ${evaluation.changed_zones.join(', ')}`
    : 'no zones changed decision';

  container.append(counts, agreement, margin, changed);
}
