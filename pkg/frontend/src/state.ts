// UI state machine. Exactly one recording state is active at a time;
// navigation is clamped to session bounds and disabled while recording.

import type { RecordingMeta } from './api.js';

export type RecState = 'idle' | 'armed' | 'recording' | 'review';

export interface UiState {
  nPrompts: number;
  promptIndex: number;
  recState: RecState;
  livePeakDbfs: number;
  clip: boolean;
  lastMeta: Record<number, RecordingMeta>;
  error: string | null;
}

export type UiEvent =
  | { kind: 'session_loaded'; nPrompts: number }
  | { kind: 'nav'; delta: number }
  | { kind: 'arm' }
  | { kind: 'record_started' }
  | { kind: 'meter'; dbfs: number; clip: boolean }
  | { kind: 'record_stopped' }
  | { kind: 'upload_ok'; meta: RecordingMeta }
  | { kind: 'upload_failed'; message: string }
  | { kind: 'error'; message: string }
  | { kind: 'dismiss_error' };

export function initialState(): UiState {
  return {
    nPrompts: 0,
    promptIndex: 0,
    recState: 'idle',
    livePeakDbfs: -120,
    clip: false,
    lastMeta: {},
    error: null,
  };
}

export function canNavigate(state: UiState, delta: number): boolean {
  if (state.recState === 'recording' || state.recState === 'armed') return false;
  const target = state.promptIndex + delta;
  return target >= 0 && target < state.nPrompts;
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case 'session_loaded':
      return { ...initialState(), nPrompts: event.nPrompts };
    case 'nav': {
      if (!canNavigate(state, event.delta)) return state;
      return { ...state, promptIndex: state.promptIndex + event.delta, recState: 'idle' };
    }
    case 'arm':
      if (state.recState === 'recording') return state;
      return { ...state, recState: 'armed', clip: false, livePeakDbfs: -120 };
    case 'record_started':
      return { ...state, recState: 'recording' };
    case 'meter':
      if (state.recState !== 'recording') return state;
      return { ...state, livePeakDbfs: event.dbfs, clip: state.clip || event.clip };
    case 'record_stopped':
      return { ...state, recState: 'review' };
    case 'upload_ok':
      return {
        ...state,
        recState: 'review',
        error: null,
        lastMeta: { ...state.lastMeta, [event.meta.prompt_index]: event.meta },
      };
    case 'upload_failed':
      return { ...state, recState: 'review', error: event.message };
    case 'error':
      return { ...state, error: event.message };
    case 'dismiss_error':
      return { ...state, error: null };
  }
}
