import { describe, expect, it } from 'vitest';

import { canNavigate, initialState, reduce, UiState } from '../src/state.js';

function loaded(n = 3): UiState {
  return reduce(initialState(), { kind: 'session_loaded', nPrompts: n });
}

describe('navigation', () => {
  it('clamps to session bounds', () => {
    let s = loaded(3);
    expect(canNavigate(s, -1)).toBe(false); // at the first prompt
    s = reduce(s, { kind: 'nav', delta: 1 });
    s = reduce(s, { kind: 'nav', delta: 1 });
    expect(s.promptIndex).toBe(2);
    expect(canNavigate(s, 1)).toBe(false); // at the last prompt
    s = reduce(s, { kind: 'nav', delta: 1 });
    expect(s.promptIndex).toBe(2); // unchanged
  });

  it('never skips indices', () => {
    let s = loaded(5);
    const seen = [s.promptIndex];
    for (let i = 0; i < 4; i++) {
      s = reduce(s, { kind: 'nav', delta: 1 });
      seen.push(s.promptIndex);
    }
    expect(seen).toEqual([0, 1, 2, 3, 4]);
  });

  it('is disabled while recording', () => {
    let s = loaded(3);
    s = reduce(s, { kind: 'arm' });
    s = reduce(s, { kind: 'record_started' });
    expect(canNavigate(s, 1)).toBe(false);
    s = reduce(s, { kind: 'nav', delta: 1 });
    expect(s.promptIndex).toBe(0);
    s = reduce(s, { kind: 'record_stopped' });
    expect(canNavigate(s, 1)).toBe(true);
  });
});

describe('recording state machine', () => {
  it('exactly one state active through a take', () => {
    let s = loaded();
    expect(s.recState).toBe('idle');
    s = reduce(s, { kind: 'arm' });
    expect(s.recState).toBe('armed');
    s = reduce(s, { kind: 'record_started' });
    expect(s.recState).toBe('recording');
    s = reduce(s, { kind: 'record_stopped' });
    expect(s.recState).toBe('review');
  });

  it('meter events only apply while recording', () => {
    let s = loaded();
    s = reduce(s, { kind: 'meter', dbfs: -3, clip: false });
    expect(s.livePeakDbfs).toBe(-120);
    s = reduce(s, { kind: 'arm' });
    s = reduce(s, { kind: 'record_started' });
    s = reduce(s, { kind: 'meter', dbfs: -3, clip: false });
    expect(s.livePeakDbfs).toBe(-3);
  });

  it('clip flag stays latched across meter events', () => {
    let s = loaded();
    s = reduce(s, { kind: 'arm' });
    s = reduce(s, { kind: 'record_started' });
    s = reduce(s, { kind: 'meter', dbfs: 0, clip: true });
    s = reduce(s, { kind: 'meter', dbfs: -40, clip: false });
    expect(s.clip).toBe(true);
  });

  it('upload outcome stores server meta and surfaces failures', () => {
    let s = loaded();
    const meta = {
      prompt_index: 0, path: 'x', peak_dbfs: -3, duration_s: 1,
      normalized: false, trimmed: false, safe_copies: [],
    };
    s = reduce(s, { kind: 'upload_ok', meta });
    expect(s.lastMeta[0]).toEqual(meta);
    s = reduce(s, { kind: 'upload_failed', message: 'boom' });
    expect(s.error).toBe('boom');
    s = reduce(s, { kind: 'dismiss_error' });
    expect(s.error).toBeNull();
  });
});
