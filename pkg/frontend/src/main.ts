// App wiring: prompts, navigation, capture, monitoring panels, safe copies.

import { ApiError, StudioApi, PromptView } from './api.js';
import { MicrophoneSource } from './capture.js';
import { RecorderController } from './recorder.js';
import { UiState, UiEvent, initialState, reduce, canNavigate } from './state.js';
import { drawSpectrogram, drawWaveform, meterPercent } from './views.js';

const api = new StudioApi();
let state: UiState = initialState();
let recorder: RecorderController | null = null;
let sessionRate = 16000;

const el = (id: string) => document.getElementById(id)!;

function dispatch(event: UiEvent): void {
  state = reduce(state, event);
  render();
}

async function refreshPrompt(): Promise<PromptView | null> {
  try {
    const prompt = await api.prompt(state.promptIndex);
    renderPrompt(prompt);
    if (prompt.recording) {
      await renderPanels(prompt.index);
    } else {
      clearPanels();
    }
    return prompt;
  } catch (e) {
    dispatch({ kind: 'error', message: describe(e) });
    return null;
  }
}

function describe(e: unknown): string {
  if (e instanceof ApiError) return `server error ${e.status}: ${e.message}`;
  if (e instanceof Error) return e.message;
  return String(e);
}

function renderPrompt(prompt: PromptView): void {
  el('prompt-text').textContent = prompt.text;
  const phonetic = el('prompt-phonetic');
  phonetic.textContent = prompt.phonetic
    ? prompt.phonetic.map((word) => word.join(' ')).join('  |  ')
    : '';
  const badge = el('status-badge');
  badge.textContent = prompt.status;
  badge.className = `badge badge-${prompt.status}`;
  el('prompt-pos').textContent = `${prompt.index + 1} / ${state.nPrompts}`;
  const copies = el('copies-list');
  copies.innerHTML = '';
  for (const path of prompt.recording?.safe_copies ?? []) {
    const li = document.createElement('li');
    li.textContent = path.split('/').pop() ?? path;
    copies.appendChild(li);
  }
}

async function renderPanels(index: number): Promise<void> {
  try {
    const [points, spec] = await Promise.all([
      api.waveform(index, 800),
      api.spectrogram(index),
    ]);
    drawWaveform(el('waveform') as HTMLCanvasElement, points);
    drawSpectrogram(el('spectrogram') as HTMLCanvasElement, spec);
  } catch (e) {
    dispatch({ kind: 'error', message: describe(e) });
  }
}

function clearPanels(): void {
  for (const id of ['waveform', 'spectrogram']) {
    const canvas = el(id) as HTMLCanvasElement;
    canvas.getContext('2d')?.clearRect(0, 0, canvas.width, canvas.height);
  }
}

function render(): void {
  (el('btn-prev') as HTMLButtonElement).disabled = !canNavigate(state, -1);
  (el('btn-next') as HTMLButtonElement).disabled = !canNavigate(state, 1);
  (el('btn-record') as HTMLButtonElement).disabled = state.recState === 'recording';
  (el('btn-stop') as HTMLButtonElement).disabled = state.recState !== 'recording';
  const meter = el('meter-fill');
  meter.style.width = `${meterPercent(state.livePeakDbfs)}%`;
  el('meter-db').textContent = `${state.livePeakDbfs.toFixed(1)} dBFS`;
  el('clip-indicator').classList.toggle('clip-on', state.clip);
  const banner = el('error-banner');
  banner.textContent = state.error ?? '';
  banner.style.display = state.error ? 'block' : 'none';
}

async function startRecording(): Promise<void> {
  dispatch({ kind: 'arm' });
  const source = new MicrophoneSource(sessionRate);
  recorder = new RecorderController(api, source, (reading) =>
    dispatch({ kind: 'meter', dbfs: reading.dbfs, clip: reading.clip }));
  try {
    await recorder.start();
    dispatch({ kind: 'record_started' });
  } catch (e) {
    dispatch({
      kind: 'error',
      message: `microphone unavailable: ${describe(e)} — grant permission and retry`,
    });
  }
}

async function stopAndUpload(): Promise<void> {
  if (!recorder) return;
  try {
    await recorder.stop();
    dispatch({ kind: 'record_stopped' });
    const meta = await recorder.upload(state.promptIndex);
    dispatch({ kind: 'upload_ok', meta });
    await refreshPrompt();
  } catch (e) {
    // the take stays in the recorder for retry
    dispatch({ kind: 'upload_failed', message: `${describe(e)} — take retained, retry upload` });
  }
}

async function retryUpload(): Promise<void> {
  if (!recorder?.retained) return;
  try {
    const meta = await recorder.upload(state.promptIndex);
    dispatch({ kind: 'upload_ok', meta });
    await refreshPrompt();
  } catch (e) {
    dispatch({ kind: 'upload_failed', message: describe(e) });
  }
}

async function safeCopy(): Promise<void> {
  try {
    await api.safeCopy(state.promptIndex);
    await refreshPrompt();
  } catch (e) {
    dispatch({ kind: 'error', message: describe(e) });
  }
}

async function navigate(delta: number): Promise<void> {
  dispatch({ kind: 'nav', delta });
  await refreshPrompt();
}

async function bootstrap(): Promise<void> {
  try {
    const session = await api.session();
    sessionRate = Number(session.config['sample_rate'] ?? 16000);
    dispatch({ kind: 'session_loaded', nPrompts: session.n_prompts });
    await refreshPrompt();
  } catch (e) {
    dispatch({ kind: 'error', message: `cannot reach session service: ${describe(e)}` });
    setTimeout(bootstrap, 2000); // retry banner behavior
  }
}

el('btn-prev').addEventListener('click', () => navigate(-1));
el('btn-next').addEventListener('click', () => navigate(1));
el('btn-record').addEventListener('click', startRecording);
el('btn-stop').addEventListener('click', stopAndUpload);
el('btn-retry').addEventListener('click', retryUpload);
el('btn-safe-copy').addEventListener('click', safeCopy);
el('error-banner').addEventListener('click', () => dispatch({ kind: 'dismiss_error' }));

bootstrap();
