// Client-side PCM WAV encoding so the server contract stays
// "finished WAV in, meta out".

// Quantize with round-half-away-from-zero and saturation, matching the
// server's own writer.
export function encodeWavPcm16(samples: Float32Array, sampleRate: number): ArrayBuffer {
  const n = samples.length;
  const payloadBytes = n * 2;
  const buffer = new ArrayBuffer(44 + payloadBytes);
  const view = new DataView(buffer);

  const writeAscii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) {
      view.setUint8(offset + i, text.charCodeAt(i));
    }
  };

  writeAscii(0, 'RIFF');
  view.setUint32(4, 36 + payloadBytes, true);
  writeAscii(8, 'WAVE');
  writeAscii(12, 'fmt ');
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  writeAscii(36, 'data');
  view.setUint32(40, payloadBytes, true);

  for (let i = 0; i < n; i++) {
    const x = samples[i] * 32768;
    const rounded = x >= 0 ? Math.floor(x + 0.5) : Math.ceil(x - 0.5);
    const clamped = Math.max(-32768, Math.min(32767, rounded));
    view.setInt16(44 + i * 2, clamped, true);
  }
  return buffer;
}

export function concatChunks(chunks: Float32Array[]): Float32Array {
  let total = 0;
  for (const c of chunks) total += c.length;
  const out = new Float32Array(total);
  let offset = 0;
  for (const c of chunks) {
    out.set(c, offset);
    offset += c.length;
  }
  return out;
}
