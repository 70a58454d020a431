// Canvas renderers for the monitoring panels. The spectrogram consumes the
// server's dB matrix directly so DSP stays single-sourced.

import type { SpectrogramData } from './api.js';

export function drawWaveform(
  canvas: HTMLCanvasElement,
  points: [number, number][],
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = '#10243a';
  ctx.fillRect(0, 0, width, height);
  ctx.strokeStyle = '#57b6ff';
  ctx.beginPath();
  const mid = height / 2;
  const xScale = width / Math.max(1, points.length);
  for (let i = 0; i < points.length; i++) {
    const [lo, hi] = points[i];
    const x = i * xScale;
    ctx.moveTo(x, mid - hi * mid);
    ctx.lineTo(x, mid - lo * mid);
  }
  ctx.stroke();
}

export function drawSpectrogram(
  canvas: HTMLCanvasElement,
  spec: SpectrogramData,
  floorDb = -100,
  ceilDb = 0,
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (spec.frames === 0) return;
  const cellW = width / spec.frames;
  const cellH = height / spec.bins;
  for (let f = 0; f < spec.frames; f++) {
    for (let b = 0; b < spec.bins; b++) {
      const v = (spec.db[f][b] - floorDb) / (ceilDb - floorDb);
      const t = Math.max(0, Math.min(1, v));
      ctx.fillStyle = heat(t);
      // low frequencies at the bottom
      ctx.fillRect(f * cellW, height - (b + 1) * cellH, cellW + 1, cellH + 1);
    }
  }
}

function heat(t: number): string {
  const r = Math.round(255 * Math.min(1, 2 * t));
  const g = Math.round(255 * Math.max(0, 2 * t - 1));
  const b = Math.round(64 * (1 - t));
  return `rgb(${r},${g},${b})`;
}

export function meterPercent(dbfs: number, rangeDb = 60): number {
  return Math.max(0, Math.min(100, ((dbfs + rangeDb) / rangeDb) * 100));
}
