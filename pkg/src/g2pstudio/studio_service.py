"""HTTP service for prompted-speech recording sessions.

Endpoints cover prompt navigation, WAV upload with optional trim/normalize
post-processing, waveform/spectrogram monitoring data, immutable timestamped
safe copies, and G2P transcription of arbitrary text. Session state lives in
a single JSON manifest next to the recordings; every mutation rewrites it
atomically (write-temp-rename), so a crash never leaves it half-written.
"""

from __future__ import annotations

import json
import os
import shutil
import string
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from . import audio
from .errors import (
    EmptyAudio,
    FormatError,
    G2PStudioError,
    IoError,
    NotFound,
    RateMismatch,
    ServiceUnavailable,
    UnsupportedMedia,
)
from .g2p_models import Seq2SeqModel, greedy_decode
from .lexicon import Lexicon

DEFAULT_PUNCTUATION = string.punctuation + "‘’“”¿¡"


@dataclass(frozen=True)
class SessionConfig:
    storage_dir: Path
    sample_rate: int = 16000
    bit_depth: int = 16
    normalize_target_dbfs: float = -3.0
    trim_threshold_dbfs: float = -40.0
    trim_guard_ms: float = 100.0
    auto_normalize: bool = False
    auto_trim: bool = False

    def __post_init__(self):
        if self.bit_depth not in audio.SUPPORTED_BIT_DEPTHS:
            raise ValueError(f"unsupported bit depth {self.bit_depth}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "storage_dir", Path(self.storage_dir))

    def to_dict(self) -> dict:
        return {
            "storage_dir": str(self.storage_dir),
            "sample_rate": self.sample_rate,
            "bit_depth": self.bit_depth,
            "normalize_target_dbfs": self.normalize_target_dbfs,
            "trim_threshold_dbfs": self.trim_threshold_dbfs,
            "trim_guard_ms": self.trim_guard_ms,
            "auto_normalize": self.auto_normalize,
            "auto_trim": self.auto_trim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        return cls(
            storage_dir=Path(d["storage_dir"]),
            sample_rate=int(d.get("sample_rate", 16000)),
            bit_depth=int(d.get("bit_depth", 16)),
            normalize_target_dbfs=float(d.get("normalize_target_dbfs", -3.0)),
            trim_threshold_dbfs=float(d.get("trim_threshold_dbfs", -40.0)),
            trim_guard_ms=float(d.get("trim_guard_ms", 100.0)),
            auto_normalize=bool(d.get("auto_normalize", False)),
            auto_trim=bool(d.get("auto_trim", False)),
        )

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SessionConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise IoError(f"cannot read session config {path}: {e}") from e
        return cls.from_dict(d)


@dataclass
class Prompt:
    index: int
    text: str
    phonetic: list[list[str]] | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "text": self.text, "phonetic": self.phonetic}


@dataclass
class RecordingMeta:
    prompt_index: int
    path: str
    peak_dbfs: float
    duration_s: float
    normalized: bool = False
    trimmed: bool = False
    safe_copies: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "prompt_index": self.prompt_index,
            "path": self.path,
            "peak_dbfs": self.peak_dbfs,
            "duration_s": self.duration_s,
            "normalized": self.normalized,
            "trimmed": self.trimmed,
            "safe_copies": list(self.safe_copies),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecordingMeta":
        return cls(
            prompt_index=d["prompt_index"],
            path=d["path"],
            peak_dbfs=d["peak_dbfs"],
            duration_s=d["duration_s"],
            normalized=d.get("normalized", False),
            trimmed=d.get("trimmed", False),
            safe_copies=list(d.get("safe_copies", [])),
        )


class Transcriber:
    """Lexicon-first G2P: exact lookup, then model fallback."""

    def __init__(self, language: str, model: Seq2SeqModel | None,
                 lexicon: Lexicon | None = None,
                 punctuation: str = DEFAULT_PUNCTUATION):
        self.language = language
        self.model = model
        self.punctuation = punctuation
        self._lookup: dict[str, tuple[str, ...]] = {}
        if lexicon is not None:
            for entry in lexicon.entries:
                self._lookup.setdefault(entry.word, entry.pronunciations[0])

    def words_of(self, text: str) -> list[str]:
        table = str.maketrans("", "", self.punctuation)
        return [w for w in text.lower().translate(table).split() if w]

    def transcribe(self, text: str) -> list[dict]:
        out = []
        for word in self.words_of(text):
            if word in self._lookup:
                out.append({"word": word, "phonemes": list(self._lookup[word]),
                            "source": "lexicon"})
            elif self.model is not None:
                out.append({"word": word,
                            "phonemes": greedy_decode(self.model, word),
                            "source": "model"})
            else:
                raise ServiceUnavailable("no model loaded for out-of-lexicon words")
        return out


def load_prompts(path: str | Path, phonetic_path: str | Path | None = None) -> list[Prompt]:
    """One prompt per UTF-8 line; optional sidecar file with aligned phonetics.

    Sidecar lines hold one space-separated phoneme group per word, groups
    separated by " | ".
    """
    try:
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
                 if ln.strip()]
    except OSError as e:
        raise IoError(f"cannot read prompts {path}: {e}") from e
    phonetics: list[list[list[str]] | None] = [None] * len(lines)
    if phonetic_path is not None:
        try:
            plines = Path(phonetic_path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise IoError(f"cannot read phonetics {phonetic_path}: {e}") from e
        for i, pline in enumerate(plines[: len(lines)]):
            if pline.strip():
                phonetics[i] = [grp.split() for grp in pline.split(" | ")]
    return [Prompt(index=i, text=text, phonetic=ph)
            for i, (text, ph) in enumerate(zip(lines, phonetics))]


class StudioSession:
    """Recording-session state bound to a storage directory.

    Concurrent reads are unrestricted; mutations serialize through a single
    session-level lock. Safe copies are immutable: nothing here ever rewrites
    or deletes one.
    """

    MANIFEST = "manifest.json"

    def __init__(self, config: SessionConfig, prompts: list[Prompt],
                 transcriber: Transcriber | None = None):
        self.config = config
        self.prompts = prompts
        self.transcriber = transcriber
        self.recordings: dict[int, RecordingMeta] = {}
        self.lock = threading.Lock()
        self.config.storage_dir.mkdir(parents=True, exist_ok=True)
        self._load_manifest()
        self._save_manifest()

    # --- manifest ---

    @property
    def manifest_path(self) -> Path:
        return self.config.storage_dir / self.MANIFEST

    def _load_manifest(self) -> None:
        if not self.manifest_path.exists():
            return
        d = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        for key, md in d.get("recordings", {}).items():
            meta = RecordingMeta.from_dict(md)
            if Path(meta.path).exists():
                self.recordings[int(key)] = meta
        for pd in d.get("prompts", []):
            i = pd["index"]
            if i < len(self.prompts) and pd.get("phonetic") is not None:
                self.prompts[i].phonetic = pd["phonetic"]

    def _save_manifest(self) -> None:
        d = {
            "config": self.config.to_dict(),
            "prompts": [p.to_dict() for p in self.prompts],
            "recordings": {str(i): m.to_dict() for i, m in self.recordings.items()},
        }
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(d, ensure_ascii=False, indent=2),
                       encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    # --- queries ---

    def _check_index(self, i: int) -> None:
        if not 0 <= i < len(self.prompts):
            raise NotFound(f"prompt {i} does not exist")

    def status(self, i: int) -> str:
        meta = self.recordings.get(i)
        if meta is None:
            return "none"
        return "safe-copied" if meta.safe_copies else "recorded"

    def prompt_view(self, i: int) -> dict:
        self._check_index(i)
        p = self.prompts[i]
        d = p.to_dict()
        d["status"] = self.status(i)
        meta = self.recordings.get(i)
        d["recording"] = meta.to_dict() if meta else None
        return d

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_prompts": len(self.prompts),
            "n_recorded": len(self.recordings),
            "transcription_language": self.transcriber.language
            if self.transcriber else None,
        }

    def _recording_path(self, i: int) -> Path:
        return self.config.storage_dir / f"{i:05d}.wav"

    def _stored_waveform(self, i: int) -> audio.Waveform:
        meta = self.recordings.get(i)
        if meta is None:
            raise NotFound(f"prompt {i} has no recording")
        return audio.read_wav(meta.path)

    # --- mutations ---

    def put_recording(self, i: int, body: bytes) -> RecordingMeta:
        self._check_index(i)
        try:
            wave = audio.decode_wav(body)
        except (FormatError, IoError) as e:
            raise UnsupportedMedia(str(e)) from e
        if wave.sample_rate != self.config.sample_rate:
            raise RateMismatch(
                f"upload at {wave.sample_rate} Hz, session configured for "
                f"{self.config.sample_rate} Hz (no resampling)"
            )
        trimmed = normalized = False
        if self.config.auto_trim and len(wave):
            wave = audio.trim_silence(
                wave, self.config.trim_threshold_dbfs, self.config.trim_guard_ms
            ).waveform
            trimmed = True
        if self.config.auto_normalize and len(wave) \
                and float(np.max(np.abs(wave.samples))) > 0:
            wave = audio.peak_normalize(wave, self.config.normalize_target_dbfs)
            normalized = True

        with self.lock:
            path = self._recording_path(i)
            stored_bytes = audio.encode_wav(wave, self.config.bit_depth)
            tmp = path.with_suffix(".wav.tmp")
            tmp.write_bytes(stored_bytes)
            os.replace(tmp, path)
            stored = audio.decode_wav(stored_bytes)
            try:
                peak = audio.peak_level(stored)
            except EmptyAudio:
                peak = audio.SILENCE_FLOOR_DBFS
            old = self.recordings.get(i)
            meta = RecordingMeta(
                prompt_index=i,
                path=str(path),
                peak_dbfs=peak,
                duration_s=stored.duration_s,
                normalized=normalized,
                trimmed=trimmed,
                safe_copies=old.safe_copies if old else [],
            )
            self.recordings[i] = meta
            self._save_manifest()
        return meta

    def safe_copy(self, i: int) -> str:
        with self.lock:
            meta = self.recordings.get(i)
            if meta is None:
                raise NotFound(f"prompt {i} has no recording to copy")
            while True:
                stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
                suffix = f"{time.time_ns() % 1_000_000_000:09d}"
                copy_path = self.config.storage_dir / f"{i:05d}.safe.{stamp}.{suffix}.wav"
                if not copy_path.exists():
                    break
            shutil.copyfile(meta.path, copy_path)
            meta.safe_copies.append(str(copy_path))
            self._save_manifest()
        return str(copy_path)

    def waveform_points(self, i: int, points: int) -> list[tuple[float, float]]:
        """Exactly `points` (min, max) pairs decimated from the stored file."""
        if points < 1:
            raise NotFound("points must be >= 1")
        wave = self._stored_waveform(i)
        n = len(wave)
        bounds = np.linspace(0, n, points + 1).astype(int)
        out = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b > a:
                seg = wave.samples[a:b]
                out.append((float(seg.min()), float(seg.max())))
            elif n:
                s = float(wave.samples[min(a, n - 1)])
                out.append((s, s))
            else:
                out.append((0.0, 0.0))
        return out

    def spectrogram(self, i: int, window_size: int = 512,
                    hop: int | None = None) -> dict:
        wave = self._stored_waveform(i)
        spec = audio.compute_spectrogram(wave, window_size=window_size, hop=hop)
        d = spec.to_dict()
        d["frame_times_s"] = spec.frame_times().tolist()
        d["bin_freqs_hz"] = spec.bin_freqs().tolist()
        return d

    def transcribe(self, text: str, language: str,
                   save_to_prompt: int | None = None) -> list[dict]:
        if self.transcriber is None:
            raise ServiceUnavailable("no transcription model loaded")
        if language != self.transcriber.language:
            raise NotFound(f"no model for language {language!r}")
        result = self.transcriber.transcribe(text)
        if save_to_prompt is not None:
            self._check_index(save_to_prompt)
            with self.lock:
                self.prompts[save_to_prompt].phonetic = [
                    r["phonemes"] for r in result
                ]
                self._save_manifest()
        return result


_STATUS = {
    NotFound: 404,
    UnsupportedMedia: 415,
    RateMismatch: 409,
    ServiceUnavailable: 503,
}


def create_app(session: StudioSession,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="g2pstudio recording service")

    @app.exception_handler(G2PStudioError)
    async def handle_domain_error(_request: Request, exc: G2PStudioError):
        status = _STATUS.get(type(exc), 400)
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    @app.get("/api/session")
    def get_session():
        return session.summary()

    @app.get("/api/prompts")
    def get_prompts():
        return [session.prompt_view(i) for i in range(len(session.prompts))]

    @app.get("/api/prompts/{i}")
    def get_prompt(i: int):
        return session.prompt_view(i)

    @app.put("/api/recordings/{i}")
    async def put_recording(i: int, request: Request):
        body = await request.body()
        return session.put_recording(i, body).to_dict()

    @app.get("/api/recordings/{i}")
    def get_recording(i: int):
        session._check_index(i)
        meta = session.recordings.get(i)
        if meta is None:
            raise NotFound(f"prompt {i} has no recording")
        return meta.to_dict()

    @app.post("/api/recordings/{i}/safe-copy")
    def post_safe_copy(i: int):
        return {"path": session.safe_copy(i)}

    @app.get("/api/recordings/{i}/waveform")
    def get_waveform(i: int, points: int = 800):
        if points < 1 or points > 100_000:
            raise HTTPException(status_code=422, detail="points out of range")
        pairs = session.waveform_points(i, points)
        return {"points": [[lo, hi] for lo, hi in pairs]}

    @app.get("/api/recordings/{i}/spectrogram")
    def get_spectrogram(i: int, window_size: int = 512, hop: int | None = None):
        return session.spectrogram(i, window_size=window_size, hop=hop)

    @app.post("/api/transcribe")
    async def post_transcribe(request: Request):
        body = await request.json()
        text = body.get("text", "")
        language = body.get("language", "")
        save_to = body.get("save_to_prompt")
        return {"words": session.transcribe(text, language, save_to)}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app
