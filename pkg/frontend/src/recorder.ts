// Capture orchestration: pull chunks from an audio source, keep the live
// meter fed, and turn the finished take into a WAV upload. The source is an
// interface so tests can inject synthetic streams.

import { StudioApi, RecordingMeta } from './api.js';
import { PeakMeter, CLIP_THRESHOLD_DBFS } from './meter.js';
import { concatChunks, encodeWavPcm16 } from './wav.js';

export interface AudioSource {
  readonly sampleRate: number;
  start(onChunk: (chunk: Float32Array) => void): Promise<void> | void;
  stop(): Promise<void> | void;
}

export interface MeterReading {
  dbfs: number;
  clip: boolean;
}

export class RecorderController {
  readonly meter = new PeakMeter();
  private chunks: Float32Array[] = [];
  private retainedTake: Float32Array | null = null;
  private recording = false;

  constructor(
    private readonly api: StudioApi,
    private readonly source: AudioSource,
    private readonly onMeter?: (reading: MeterReading) => void,
  ) {}

  get isRecording(): boolean {
    return this.recording;
  }

  async start(): Promise<void> {
    if (this.recording) return;
    this.chunks = [];
    this.meter.reset();
    this.recording = true;
    await this.source.start((chunk) => {
      if (!this.recording) return;
      this.chunks.push(chunk.slice());
      const dbfs = this.meter.update(chunk, this.source.sampleRate);
      this.onMeter?.({ dbfs, clip: this.meter.latchedClip });
    });
  }

  async stop(): Promise<Float32Array> {
    if (!this.recording) throw new Error('not recording');
    this.recording = false;
    await this.source.stop();
    const take = concatChunks(this.chunks);
    this.retainedTake = take;
    return take;
  }

  // Uploads the most recent take; on failure the take is retained so the
  // operator can retry without re-reading the prompt.
  async upload(promptIndex: number, take?: Float32Array): Promise<RecordingMeta> {
    const samples = take ?? this.retainedTake;
    if (!samples) throw new Error('no take to upload');
    const wav = encodeWavPcm16(samples, this.source.sampleRate);
    const meta = await this.api.upload(promptIndex, wav);
    this.retainedTake = null;
    return meta;
  }

  get retained(): Float32Array | null {
    return this.retainedTake;
  }
}

export { CLIP_THRESHOLD_DBFS };
