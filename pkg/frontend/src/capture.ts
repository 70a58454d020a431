// Microphone-backed AudioSource. Asks the platform for the session's sample
// rate; if the hardware cannot honor it, the captured rate is sent as-is and
// the server's rate-mismatch rejection is surfaced to the operator.

import type { AudioSource } from './recorder.js';

const CHUNK_SAMPLES = 1024; // ~15 meter updates/s at 16 kHz

export class MicrophoneSource implements AudioSource {
  sampleRate: number;
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private node: ScriptProcessorNode | null = null;

  constructor(private readonly preferredRate: number) {
    this.sampleRate = preferredRate;
  }

  async start(onChunk: (chunk: Float32Array) => void): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({
      audio: {
        channelCount: 1,
        sampleRate: this.preferredRate,
        echoCancellation: false,
        noiseSuppression: false,
        autoGainControl: false,
      },
    });
    try {
      this.context = new AudioContext({ sampleRate: this.preferredRate });
    } catch {
      this.context = new AudioContext();
    }
    this.sampleRate = this.context.sampleRate;
    const source = this.context.createMediaStreamSource(this.stream);
    this.node = this.context.createScriptProcessor(CHUNK_SAMPLES, 1, 1);
    this.node.onaudioprocess = (event) => {
      onChunk(event.inputBuffer.getChannelData(0));
    };
    source.connect(this.node);
    this.node.connect(this.context.destination);
  }

  async stop(): Promise<void> {
    this.node?.disconnect();
    this.node = null;
    this.stream?.getTracks().forEach((t) => t.stop());
    this.stream = null;
    if (this.context) {
      await this.context.close();
      this.context = null;
    }
  }
}
