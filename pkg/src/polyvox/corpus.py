"""Corpus ingestion: manifests, phonesets, mel features, pretraining chunks.

File formats
------------
Manifest: UTF-8 text, one utterance per line, six tab-separated fields::

    id <TAB> speaker <TAB> language <TAB> phoneme_path <TAB> mel_path <TAB> frames

Blank lines and lines starting with ``#`` are ignored. Paths are relative
to the manifest's directory.

Phoneset: UTF-8 text, one phoneme symbol per line (order defines indices).

Phoneme file: UTF-8 text, whitespace-separated phoneme symbols.

Mel file: binary. 8-byte magic ``b"PVOXMEL1"``, u32 version (1), u32 frame
count, u32 bin count, then float32 little-endian values, row-major
(frame-major). Mel values are unnormalized log-amplitudes with floor 1e-5.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MEL_MAGIC = b"PVOXMEL1"
MEL_VERSION = 1

# Feature extraction conventions for synthetic / user-supplied corpora.
# Audio at 22050 Hz, 1024-sample analysis window, 256-sample hop, 80 mel
# bins; log-amplitude floor 1e-5. Hop 256 at 22050 Hz gives ~86.13 frames/s,
# so 800 frames spans roughly 9.3 seconds of speech.
SAMPLE_RATE = 22050
WINDOW_SIZE = 1024
HOP_SIZE = 256
DEFAULT_MEL_BINS = 80
LOG_FLOOR = 1e-5
FRAMES_PER_SECOND = SAMPLE_RATE / HOP_SIZE


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Phoneset:
    """Phoneme inventory for one language; index is a bijection onto 0..n-1."""

    language: str
    symbols: tuple[str, ...]
    index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        seen = {}
        for i, sym in enumerate(self.symbols):
            if sym in seen:
                raise CorpusError(f"phoneset {self.language!r}: duplicate symbol {sym!r}")
            seen[sym] = i
        object.__setattr__(self, "index", seen)

    def __len__(self) -> int:
        return len(self.symbols)

    def decode(self, indices) -> list[str]:
        return [self.symbols[i] for i in indices]


def load_phoneset(path: str | Path, language: str) -> Phoneset:
    symbols = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        sym = line.strip()
        if sym:
            symbols.append(sym)
    return Phoneset(language=language, symbols=tuple(symbols))


def save_phoneset(path: str | Path, phoneset: Phoneset) -> None:
    Path(path).write_text("\n".join(phoneset.symbols) + "\n", encoding="utf-8")


def encode_phonemes(symbols, phoneset: Phoneset) -> np.ndarray:
    """Map phoneme symbols to integer indices; unknown symbols are errors."""
    out = np.empty(len(symbols), dtype=np.int64)
    for pos, sym in enumerate(symbols):
        idx = phoneset.index.get(sym)
        if idx is None:
            raise CorpusError(
                f"unknown phoneme {sym!r} at position {pos} for language {phoneset.language!r}")
        out[pos] = idx
    return out


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    speaker: str
    language: str
    phoneme_path: Path
    mel_path: Path
    frames: int


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    root: Path

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> dict[tuple[str, str], int]:
        """Utterance counts per (speaker, language)."""
        out: dict[tuple[str, str], int] = {}
        for e in self.entries:
            key = (e.speaker, e.language)
            out[key] = out.get(key, 0) + 1
        return out

    def speakers(self) -> list[str]:
        return sorted({e.speaker for e in self.entries})

    def languages(self) -> list[str]:
        return sorted({e.language for e in self.entries})


def load_manifest(path: str | Path, known_languages: set[str] | None = None,
                  check_files: bool = True) -> CorpusManifest:
    """Parse and validate a manifest file.

    Errors carry the 1-based line number. Duplicate ids and, when
    ``known_languages`` is given, unknown language codes are rejected.
    """
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise CorpusError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}")
        utt_id, speaker, language, phon_rel, mel_rel, frames_s = (f.strip() for f in fields)
        if utt_id in seen_ids:
            raise CorpusError(f"{path}:{lineno}: duplicate utterance id {utt_id!r}")
        seen_ids.add(utt_id)
        if known_languages is not None and language not in known_languages:
            raise CorpusError(f"{path}:{lineno}: unknown language {language!r}")
        try:
            frames = int(frames_s)
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: frame count {frames_s!r} is not an integer") from None
        if frames <= 0:
            raise CorpusError(f"{path}:{lineno}: frame count must be positive, got {frames}")
        entry = ManifestEntry(utt_id, speaker, language, root / phon_rel, root / mel_rel, frames)
        if check_files:
            if not entry.phoneme_path.is_file():
                raise CorpusError(f"{path}:{lineno}: missing phoneme file {entry.phoneme_path}")
            if not entry.mel_path.is_file():
                raise CorpusError(f"{path}:{lineno}: missing mel file {entry.mel_path}")
        entries.append(entry)
    return CorpusManifest(entries=entries, root=root)


def save_manifest(path: str | Path, manifest: CorpusManifest) -> None:
    path = Path(path)
    root = path.parent
    lines = ["# id\tspeaker\tlanguage\tphonemes\tmel\tframes"]
    for e in manifest.entries:
        phon = _relativize(e.phoneme_path, root)
        mel = _relativize(e.mel_path, root)
        lines.append(f"{e.id}\t{e.speaker}\t{e.language}\t{phon}\t{mel}\t{e.frames}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _relativize(target: Path, root: Path) -> str:
    try:
        return target.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return str(target)


def write_mel(path: str | Path, mel: np.ndarray) -> None:
    mel = np.asarray(mel, dtype=np.float32)
    if mel.ndim != 2:
        raise CorpusError(f"mel must be 2-D (frames, bins), got shape {mel.shape}")
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(struct.pack("<III", MEL_VERSION, mel.shape[0], mel.shape[1]))
        fh.write(np.ascontiguousarray(mel, dtype="<f4").tobytes())


def read_mel(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:8] != MEL_MAGIC:
        raise CorpusError(f"{path}: not a mel file (bad magic)")
    version, frames, bins = struct.unpack_from("<III", blob, 8)
    if version != MEL_VERSION:
        raise CorpusError(f"{path}: unsupported mel file version {version}")
    expected = 20 + frames * bins * 4
    if len(blob) != expected:
        raise CorpusError(f"{path}: size {len(blob)} does not match header ({expected} expected)")
    data = np.frombuffer(blob, dtype="<f4", count=frames * bins, offset=20)
    return np.array(data.reshape(frames, bins), dtype=np.float32)


@dataclass
class Utterance:
    """One recorded sentence: phoneme indices plus its mel-frame matrix."""

    id: str
    speaker: str
    language: str
    phonemes: np.ndarray          # (seq_len,) int indices into the language's phoneset
    mel: np.ndarray               # (frames, mel_bins) float32

    @property
    def frames(self) -> int:
        return self.mel.shape[0]

    @property
    def mel_bins(self) -> int:
        return self.mel.shape[1]


@dataclass
class UtterancePart:
    """A teacher-forcing window over a source utterance.

    Parts keep the full phoneme sequence; only the mel frame window
    [start, start+frames) is trained on. ``prev_frame`` is the true frame
    preceding the window (zeros at the utterance start) and ``is_final``
    marks the part holding the utterance's last frame.
    """

    utterance_id: str
    speaker: str
    language: str
    phonemes: np.ndarray
    mel: np.ndarray
    start: int
    is_final: bool
    prev_frame: np.ndarray

    @property
    def frames(self) -> int:
        return self.mel.shape[0]


def chunk_for_pretraining(utt: Utterance, max_sentence: int = 800,
                          max_part: int = 200) -> list[UtterancePart]:
    """Split an utterance into pretraining parts.

    Utterances longer than ``max_sentence`` frames are excluded (empty
    result). Retained utterances are split greedily left-to-right into
    parts of at most ``max_part`` frames; concatenating the part mels
    reproduces the source mel exactly.
    """
    if max_part > max_sentence:
        raise CorpusError(f"max_part {max_part} exceeds max_sentence {max_sentence}")
    if utt.frames > max_sentence:
        return []
    parts: list[UtterancePart] = []
    zero_prev = np.zeros(utt.mel_bins, dtype=utt.mel.dtype)
    for start in range(0, utt.frames, max_part):
        stop = min(start + max_part, utt.frames)
        prev = zero_prev if start == 0 else utt.mel[start - 1]
        parts.append(UtterancePart(
            utterance_id=utt.id,
            speaker=utt.speaker,
            language=utt.language,
            phonemes=utt.phonemes,
            mel=utt.mel[start:stop],
            start=start,
            is_final=(stop == utt.frames),
            prev_frame=prev,
        ))
    return parts


def part_from_utterance(utt: Utterance) -> UtterancePart:
    """Whole utterance viewed as a single training sample."""
    return UtterancePart(
        utterance_id=utt.id,
        speaker=utt.speaker,
        language=utt.language,
        phonemes=utt.phonemes,
        mel=utt.mel,
        start=0,
        is_final=True,
        prev_frame=np.zeros(utt.mel_bins, dtype=utt.mel.dtype),
    )


def load_utterance(entry: ManifestEntry, phoneset: Phoneset) -> Utterance:
    """Materialize one manifest entry: phoneme indices plus mel matrix."""
    symbols = Path(entry.phoneme_path).read_text(encoding="utf-8").split()
    phonemes = encode_phonemes(symbols, phoneset)
    mel = read_mel(entry.mel_path)
    if mel.shape[0] != entry.frames:
        raise CorpusError(
            f"{entry.mel_path}: {mel.shape[0]} frames, manifest says {entry.frames}")
    return Utterance(id=entry.id, speaker=entry.speaker, language=entry.language,
                     phonemes=phonemes, mel=mel)


def load_utterances(manifest: CorpusManifest,
                    phonesets: dict[str, Phoneset]) -> list[Utterance]:
    utts = []
    for entry in manifest.entries:
        ps = phonesets.get(entry.language)
        if ps is None:
            raise CorpusError(f"no phoneset loaded for language {entry.language!r}")
        utts.append(load_utterance(entry, ps))
    return utts
