// Typed client for the recording-session HTTP API. Every mutation the UI
// performs goes through these documented endpoints.

export interface RecordingMeta {
  prompt_index: number;
  path: string;
  peak_dbfs: number;
  duration_s: number;
  normalized: boolean;
  trimmed: boolean;
  safe_copies: string[];
}

export interface PromptView {
  index: number;
  text: string;
  phonetic: string[][] | null;
  status: 'none' | 'recorded' | 'safe-copied';
  recording: RecordingMeta | null;
}

export interface SessionSummary {
  config: Record<string, unknown>;
  n_prompts: number;
  n_recorded: number;
  transcription_language: string | null;
}

export interface SpectrogramData {
  db: number[][];
  window_size: number;
  hop: number;
  sample_rate: number;
  frames: number;
  bins: number;
  frame_times_s: number[];
  bin_freqs_hz: number[];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  constructor(
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
    private readonly base = '',
  ) {}

  private async request<T>(url: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + url, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }

  session(): Promise<SessionSummary> {
    return this.request('/api/session');
  }

  prompts(): Promise<PromptView[]> {
    return this.request('/api/prompts');
  }

  prompt(index: number): Promise<PromptView> {
    return this.request(`/api/prompts/${index}`);
  }

  upload(index: number, wav: ArrayBuffer): Promise<RecordingMeta> {
    return this.request(`/api/recordings/${index}`, {
      method: 'PUT',
      headers: { 'Content-Type': 'audio/wav' },
      body: wav,
    });
  }

  async safeCopy(index: number): Promise<string> {
    const body = await this.request<{ path: string }>(
      `/api/recordings/${index}/safe-copy`, { method: 'POST' });
    return body.path;
  }

  async waveform(index: number, points = 800): Promise<[number, number][]> {
    const body = await this.request<{ points: [number, number][] }>(
      `/api/recordings/${index}/waveform?points=${points}`);
    return body.points;
  }

  spectrogram(index: number): Promise<SpectrogramData> {
    return this.request(`/api/recordings/${index}/spectrogram`);
  }
}
