// Live input level monitoring: peak over a sliding window plus a clip
// indicator that latches once the input gets within 0.1 dB of full scale.

export const METER_FLOOR_DBFS = -120;
export const CLIP_THRESHOLD_DBFS = -0.1;

export function peakDbfs(samples: Float32Array): number {
  let peak = 0;
  for (let i = 0; i < samples.length; i++) {
    const a = Math.abs(samples[i]);
    if (a > peak) peak = a;
  }
  if (peak === 0) return METER_FLOOR_DBFS;
  return Math.max(20 * Math.log10(peak), METER_FLOOR_DBFS);
}

export class PeakMeter {
  private window: { peak: number; samples: number }[] = [];
  private windowSamples = 0;
  private clipLatched = false;
  private lastDbfs = METER_FLOOR_DBFS;

  constructor(readonly windowMs = 100) {}

  // Feed one capture chunk; returns the meter value over the trailing window.
  update(chunk: Float32Array, sampleRate: number): number {
    let peak = 0;
    for (let i = 0; i < chunk.length; i++) {
      const a = Math.abs(chunk[i]);
      if (a > peak) peak = a;
    }
    this.window.push({ peak, samples: chunk.length });
    this.windowSamples += chunk.length;
    const maxSamples = Math.max(1, Math.round((this.windowMs / 1000) * sampleRate));
    while (this.window.length > 1 && this.windowSamples - this.window[0].samples >= maxSamples) {
      this.windowSamples -= this.window[0].samples;
      this.window.shift();
    }
    let windowPeak = 0;
    for (const w of this.window) {
      if (w.peak > windowPeak) windowPeak = w.peak;
    }
    this.lastDbfs = windowPeak === 0
      ? METER_FLOOR_DBFS
      : Math.max(20 * Math.log10(windowPeak), METER_FLOOR_DBFS);
    if (this.lastDbfs > CLIP_THRESHOLD_DBFS) this.clipLatched = true;
    return this.lastDbfs;
  }

  get dbfs(): number {
    return this.lastDbfs;
  }

  get latchedClip(): boolean {
    return this.clipLatched;
  }

  reset(): void {
    this.window = [];
    this.windowSamples = 0;
    this.clipLatched = false;
    this.lastDbfs = METER_FLOOR_DBFS;
  }
}
