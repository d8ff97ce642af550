"""Synthetic corpora and demo experiments.

Real recordings are externally supplied; this module fabricates stand-ins:
deterministic mel matrices keyed to phoneme identity (for training and
tests) and short sine-tone wav files (for listening-test plumbing).
Mel values are unnormalized log-amplitudes in the corpus convention.
"""

from __future__ import annotations

import json
import math
import struct
import wave
from pathlib import Path

import numpy as np

from .corpus import (CorpusManifest, ManifestEntry, Phoneset, Utterance,
                     save_manifest, save_phoneset, write_mel)

MEL_LOW = -4.0
MEL_HIGH = -0.5


def synthetic_phoneset(language: str, size: int) -> Phoneset:
    symbols = tuple(f"{language}{i:02d}" for i in range(size))
    return Phoneset(language=language, symbols=symbols)


def synthetic_mel(phonemes: np.ndarray, language: str, speaker: str,
                  mel_bins: int, frames_per_phoneme: int = 4) -> np.ndarray:
    """Deterministic mel matrix: one smooth band pattern per phoneme.

    The pattern depends on (language, phoneme); the speaker shifts it by a
    small constant, so speaker identity is learnable but secondary.
    """
    lang_key = abs(hash_stable(language)) % 1000
    spk_shift = (abs(hash_stable(speaker)) % 7) * 0.05
    frames = len(phonemes) * frames_per_phoneme
    mel = np.zeros((frames, mel_bins), dtype=np.float32)
    bins = np.arange(mel_bins)
    for i, p in enumerate(phonemes):
        rng = np.random.default_rng(lang_key * 10007 + int(p))
        center = rng.uniform(0, mel_bins)
        width = rng.uniform(mel_bins / 6, mel_bins / 2)
        depth = rng.uniform(0.5, 1.0)
        profile = MEL_LOW + (MEL_HIGH - MEL_LOW) * depth * np.exp(
            -0.5 * ((bins - center) / width) ** 2)
        for t in range(frames_per_phoneme):
            ripple = 0.1 * math.sin(2 * math.pi * t / frames_per_phoneme)
            mel[i * frames_per_phoneme + t] = profile + ripple + spk_shift
    return mel


def hash_stable(text: str) -> int:
    """Process-independent string hash (builtin hash is salted)."""
    h = 2166136261
    for ch in text.encode("utf-8"):
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


def make_utterances(speaker: str, language: str, phoneset: Phoneset, count: int,
                    seed: int, mel_bins: int, phonemes_per_utterance: int = 6,
                    frames_per_phoneme: int = 4,
                    id_prefix: str | None = None) -> list[Utterance]:
    rng = np.random.default_rng(seed)
    prefix = id_prefix or f"{speaker}-{language}"
    utts = []
    for i in range(count):
        phonemes = rng.integers(0, len(phoneset), size=phonemes_per_utterance)
        mel = synthetic_mel(phonemes, language, speaker, mel_bins, frames_per_phoneme)
        utts.append(Utterance(id=f"{prefix}-{i:05d}", speaker=speaker, language=language,
                              phonemes=phonemes.astype(np.int64), mel=mel))
    return utts


def write_corpus(out_dir: str | Path, utterances: list[Utterance],
                 phonesets: dict[str, Phoneset]) -> Path:
    """Write mel/phoneme/phoneset files plus a manifest; returns its path."""
    out_dir = Path(out_dir)
    (out_dir / "mel").mkdir(parents=True, exist_ok=True)
    (out_dir / "phon").mkdir(parents=True, exist_ok=True)
    (out_dir / "phonesets").mkdir(parents=True, exist_ok=True)
    for lang, ps in phonesets.items():
        save_phoneset(out_dir / "phonesets" / f"{lang}.phones", ps)
    entries = []
    for utt in utterances:
        mel_path = out_dir / "mel" / f"{utt.id}.mel"
        phon_path = out_dir / "phon" / f"{utt.id}.txt"
        write_mel(mel_path, utt.mel)
        symbols = phonesets[utt.language].decode(utt.phonemes)
        phon_path.write_text(" ".join(symbols) + "\n", encoding="utf-8")
        entries.append(ManifestEntry(utt.id, utt.speaker, utt.language,
                                     phon_path, mel_path, utt.frames))
    manifest = CorpusManifest(entries=entries, root=out_dir)
    manifest_path = out_dir / "manifest.tsv"
    save_manifest(manifest_path, manifest)
    return manifest_path


def write_tone_wav(path: str | Path, frequency: float, duration: float = 0.4,
                   sample_rate: int = 22050, amplitude: float = 0.3) -> None:
    n = int(duration * sample_rate)
    frames = bytearray()
    for i in range(n):
        envelope = min(1.0, i / 200.0, (n - i) / 200.0)
        value = amplitude * envelope * math.sin(2 * math.pi * frequency * i / sample_rate)
        frames += struct.pack("<h", int(value * 32767))
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(bytes(frames))


def make_demo_experiment(out_dir: str | Path, systems: list[str] | None = None,
                         panels_per_set: int = 3, num_test_sets: int = 3,
                         seed: int = 7) -> Path:
    """A tiny self-contained listening test: tone wavs plus a config file."""
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    if systems is None:
        systems = ["sys-a", "sys-b", "sys-c"]
    resynthesis = "resynthesis"
    sentences = [f"sent{i:02d}" for i in range(panels_per_set * num_test_sets)]
    test_sets = [sentences[i * panels_per_set:(i + 1) * panels_per_set]
                 for i in range(num_test_sets)]
    audio = {}
    for si, system in enumerate(systems + [resynthesis]):
        table = {}
        for sj, sentence in enumerate(sentences):
            rel = f"{system}/{sentence}.wav"
            path = audio_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            write_tone_wav(path, frequency=220.0 * (si + 1) + 15.0 * sj)
            table[sentence] = rel
        audio[system] = table
    config = {
        "name": out_dir.name or "demo",
        "seed": seed,
        "systems": systems,
        "resynthesis": resynthesis,
        "panels_per_set": panels_per_set,
        "test_sets": test_sets,
        "audio_root": "audio",
        "audio": audio,
    }
    config_path = out_dir / "experiment.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path
