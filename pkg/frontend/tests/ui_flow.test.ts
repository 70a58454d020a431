// Acceptance flow with a synthetic injected audio stream:
// record -> upload -> status badge "recorded", peak meter within 0.5 dB of
// the stream's true peak, safe copy listed, re-record preserves the copy.

import { describe, expect, it } from 'vitest';

import { StudioApi } from '../src/api.js';
import { RecorderController } from '../src/recorder.js';
import { initialState, reduce, UiState } from '../src/state.js';
import { FakeServer, SyntheticSource, decodeWavPcm16 } from './helpers.js';

describe('recording flow', () => {
  it('runs the full take lifecycle against the documented API', async () => {
    const server = new FakeServer(3, 16000);
    const api = new StudioApi(server.fetch);
    let state: UiState = reduce(initialState(), {
      kind: 'session_loaded',
      nPrompts: (await api.session()).n_prompts,
    });

    // record with a synthetic stream of known peak
    const source = new SyntheticSource(16000, 0.5, 440, 12000);
    const recorder = new RecorderController(api, source, (reading) => {
      state = reduce(state, { kind: 'meter', dbfs: reading.dbfs, clip: reading.clip });
    });
    state = reduce(state, { kind: 'arm' });
    await recorder.start();
    state = reduce(state, { kind: 'record_started' });
    const take = await recorder.stop();
    state = reduce(state, { kind: 'record_stopped' });
    expect(take.length).toBe(12000);

    // peak meter within 0.5 dB of the stream's true peak
    expect(Math.abs(recorder.meter.dbfs - source.truePeakDbfs)).toBeLessThan(0.5);

    // upload -> status badge "recorded"
    const meta = await recorder.upload(0, take);
    state = reduce(state, { kind: 'upload_ok', meta });
    const prompt = await api.prompt(0);
    expect(prompt.status).toBe('recorded');
    expect(state.lastMeta[0].duration_s).toBeCloseTo(12000 / 16000, 6);

    // safe copy appears in the copies list
    const copyPath = await api.safeCopy(0);
    const copied = await api.prompt(0);
    expect(copied.status).toBe('safe-copied');
    expect(copied.recording?.safe_copies).toEqual([copyPath]);
    const copyBytes = server.copies.get(copyPath)!;
    const copyDecoded = decodeWavPcm16(copyBytes);
    expect(copyDecoded.samples.length).toBe(12000);

    // re-record: new take replaces the current file, copy intact
    const retake = new SyntheticSource(16000, 0.25, 880, 6000);
    const recorder2 = new RecorderController(api, retake);
    await recorder2.start();
    const take2 = await recorder2.stop();
    const meta2 = await recorder2.upload(0, take2);
    expect(meta2.duration_s).toBeCloseTo(6000 / 16000, 6);
    expect(meta2.safe_copies).toEqual([copyPath]);
    const after = server.copies.get(copyPath)!;
    expect(new Uint8Array(after)).toEqual(new Uint8Array(copyBytes));
    expect(decodeWavPcm16(server.recordings.get(0)!.bytes).samples.length).toBe(6000);
  });

  it('keeps the take for retry when the upload fails', async () => {
    const server = new FakeServer(1, 16000);
    const api = new StudioApi(server.fetch);
    // capture at the wrong rate: server rejects with 409, no resample
    const source = new SyntheticSource(44100, 0.5, 440, 4410);
    const recorder = new RecorderController(api, source);
    await recorder.start();
    await recorder.stop();
    await expect(recorder.upload(0)).rejects.toMatchObject({ status: 409 });
    expect(recorder.retained).not.toBeNull();
    expect(recorder.retained!.length).toBe(4410);
    expect((await api.prompt(0)).status).toBe('none');
  });

  it('uploading a malformed body surfaces unsupported media', async () => {
    const server = new FakeServer(1, 16000);
    const api = new StudioApi(server.fetch);
    await expect(api.upload(0, new TextEncoder().encode('nope').buffer))
      .rejects.toMatchObject({ status: 415 });
  });
});
