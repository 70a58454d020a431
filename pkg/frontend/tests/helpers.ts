// Shared test doubles: a WAV decoder, a synthetic audio source, and an
// in-memory fake of the session service speaking the documented API.

import type { AudioSource } from '../src/recorder.js';
import type { FetchLike } from '../src/api.js';

export function decodeWavPcm16(buffer: ArrayBuffer): {
  sampleRate: number;
  samples: Float32Array;
} {
  const view = new DataView(buffer);
  const tag = (off: number) =>
    String.fromCharCode(...new Uint8Array(buffer.slice(off, off + 4)));
  if (tag(0) !== 'RIFF' || tag(8) !== 'WAVE') throw new Error('not a WAV');
  const sampleRate = view.getUint32(24, true);
  const bits = view.getUint16(34, true);
  if (bits !== 16) throw new Error(`expected 16-bit, got ${bits}`);
  const payloadBytes = view.getUint32(40, true);
  const n = payloadBytes / 2;
  const samples = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    samples[i] = view.getInt16(44 + i * 2, true) / 32768;
  }
  return { sampleRate, samples };
}

// Synthetic capture source: emits a fixed sine in fixed-size chunks when
// started; stop() is immediate.
export class SyntheticSource implements AudioSource {
  constructor(
    readonly sampleRate: number,
    private readonly amplitude: number,
    private readonly freq = 440,
    private readonly totalSamples = 8000,
    private readonly chunkSize = 1024,
  ) {}

  start(onChunk: (chunk: Float32Array) => void): void {
    for (let offset = 0; offset < this.totalSamples; offset += this.chunkSize) {
      const n = Math.min(this.chunkSize, this.totalSamples - offset);
      const chunk = new Float32Array(n);
      for (let i = 0; i < n; i++) {
        const t = (offset + i) / this.sampleRate;
        chunk[i] = this.amplitude * Math.sin(2 * Math.PI * this.freq * t);
      }
      onChunk(chunk);
    }
  }

  stop(): void {}

  get truePeak(): number {
    let peak = 0;
    for (let offset = 0; offset < this.totalSamples; offset += 1) {
      const t = offset / this.sampleRate;
      const a = Math.abs(this.amplitude * Math.sin(2 * Math.PI * this.freq * t));
      if (a > peak) peak = a;
    }
    return peak;
  }

  get truePeakDbfs(): number {
    return 20 * Math.log10(this.truePeak);
  }
}

interface StoredRecording {
  bytes: ArrayBuffer;
  meta: {
    prompt_index: number;
    path: string;
    peak_dbfs: number;
    duration_s: number;
    normalized: boolean;
    trimmed: boolean;
    safe_copies: string[];
  };
}

// In-memory service honoring the endpoints the UI uses. Uploads are parsed
// as real WAV so peak/duration come from the actual bytes.
export class FakeServer {
  readonly recordings = new Map<number, StoredRecording>();
  readonly copies = new Map<string, ArrayBuffer>();
  private copyCounter = 0;

  constructor(
    readonly nPrompts = 3,
    readonly sampleRate = 16000,
  ) {}

  get fetch(): FetchLike {
    return async (url, init) => this.handle(url, init);
  }

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  private status(i: number): string {
    const rec = this.recordings.get(i);
    if (!rec) return 'none';
    return rec.meta.safe_copies.length ? 'safe-copied' : 'recorded';
  }

  private promptView(i: number) {
    return {
      index: i,
      text: `prompt ${i}`,
      phonetic: null,
      status: this.status(i),
      recording: this.recordings.get(i)?.meta ?? null,
    };
  }

  private async handle(url: string, init?: RequestInit): Promise<Response> {
    const method = init?.method ?? 'GET';
    const path = url.replace(/^https?:\/\/[^/]+/, '');

    if (path === '/api/session') {
      return this.json({
        config: { sample_rate: this.sampleRate },
        n_prompts: this.nPrompts,
        n_recorded: this.recordings.size,
        transcription_language: null,
      });
    }

    let m = path.match(/^\/api\/prompts\/(\d+)$/);
    if (m) {
      const i = Number(m[1]);
      if (i >= this.nPrompts) return this.json({ detail: 'no such prompt' }, 404);
      return this.json(this.promptView(i));
    }
    if (path === '/api/prompts') {
      return this.json(
        Array.from({ length: this.nPrompts }, (_, i) => this.promptView(i)));
    }

    m = path.match(/^\/api\/recordings\/(\d+)$/);
    if (m && method === 'PUT') {
      const i = Number(m[1]);
      if (i >= this.nPrompts) return this.json({ detail: 'no such prompt' }, 404);
      const bytes = init!.body as ArrayBuffer;
      let decoded;
      try {
        decoded = decodeWavPcm16(bytes);
      } catch (e) {
        return this.json({ detail: String(e) }, 415);
      }
      if (decoded.sampleRate !== this.sampleRate) {
        return this.json({ detail: 'sample-rate mismatch' }, 409);
      }
      let peak = 0;
      for (const s of decoded.samples) peak = Math.max(peak, Math.abs(s));
      const old = this.recordings.get(i);
      const meta = {
        prompt_index: i,
        path: `/takes/${String(i).padStart(5, '0')}.wav`,
        peak_dbfs: peak === 0 ? -120 : 20 * Math.log10(peak),
        duration_s: decoded.samples.length / decoded.sampleRate,
        normalized: false,
        trimmed: false,
        safe_copies: old?.meta.safe_copies ?? [],
      };
      this.recordings.set(i, { bytes, meta });
      return this.json(meta);
    }

    m = path.match(/^\/api\/recordings\/(\d+)\/safe-copy$/);
    if (m && method === 'POST') {
      const i = Number(m[1]);
      const rec = this.recordings.get(i);
      if (!rec) return this.json({ detail: 'no recording' }, 404);
      const copyPath = `${rec.meta.path}.safe.${this.copyCounter++}.wav`;
      this.copies.set(copyPath, rec.bytes.slice(0));
      rec.meta.safe_copies.push(copyPath);
      return this.json({ path: copyPath });
    }

    m = path.match(/^\/api\/recordings\/(\d+)\/waveform/);
    if (m) {
      const rec = this.recordings.get(Number(m[1]));
      if (!rec) return this.json({ detail: 'no recording' }, 404);
      const wanted = Number(new URL(url, 'http://x').searchParams.get('points') ?? 800);
      const { samples } = decodeWavPcm16(rec.bytes);
      const points: [number, number][] = [];
      for (let p = 0; p < wanted; p++) {
        const a = Math.floor((p * samples.length) / wanted);
        const b = Math.max(a + 1, Math.floor(((p + 1) * samples.length) / wanted));
        let lo = Infinity, hi = -Infinity;
        for (let i = a; i < b && i < samples.length; i++) {
          lo = Math.min(lo, samples[i]);
          hi = Math.max(hi, samples[i]);
        }
        points.push([lo === Infinity ? 0 : lo, hi === -Infinity ? 0 : hi]);
      }
      return this.json({ points });
    }

    m = path.match(/^\/api\/recordings\/(\d+)\/spectrogram$/);
    if (m) {
      const rec = this.recordings.get(Number(m[1]));
      if (!rec) return this.json({ detail: 'no recording' }, 404);
      const frames = 4, bins = 257;
      return this.json({
        db: Array.from({ length: frames }, () => new Array(bins).fill(-100)),
        window_size: 512,
        hop: 128,
        sample_rate: this.sampleRate,
        frames,
        bins,
        frame_times_s: [0, 0.008, 0.016, 0.024],
        bin_freqs_hz: Array.from({ length: bins }, (_, b) => (b * this.sampleRate) / 512),
      });
    }

    return this.json({ detail: `unhandled ${method} ${path}` }, 404);
  }
}
