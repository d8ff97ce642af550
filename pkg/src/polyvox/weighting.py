"""Smoothed, normalized class weights for imbalanced training data.

For classes with sample counts c_i (total c over N classes) the raw weight
is a square-root-smoothed inverse frequency::

    alpha_i = sqrt(c / (c_i * N))

The square root keeps the weight spread small enough that minority classes
do not destabilize training. Because it changes the total weighted sample
mass, weights are then rescaled so that mass is conserved::

    nalpha_i = alpha_i * c / sum_j(c_j * alpha_j)

which guarantees sum_i c_i * nalpha_i == c.

Speaker and language imbalances are corrected with independent tables, one
per factor, combined multiplicatively per sample. With one factor uniform
this reduces to plain single-factor weighting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import CorpusManifest

MODES = ("speaker", "language", "both")


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class ClassCounts:
    """Per-class sample counts; classes keep their given order."""

    classes: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.classes) != len(self.counts):
            raise WeightError("classes and counts must have equal length")
        if len(set(self.classes)) != len(self.classes):
            raise WeightError("duplicate class ids")
        for cls, n in zip(self.classes, self.counts):
            if n < 1:
                raise WeightError(f"class {cls!r} has count {n}; every class needs at least one sample")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class ClassWeightTable:
    classes: tuple[str, ...]
    counts: tuple[int, ...]
    raw: tuple[float, ...]
    normalized: tuple[float, ...]

    def weight(self, cls: str) -> float:
        try:
            return self.normalized[self.classes.index(cls)]
        except ValueError:
            raise WeightError(f"unknown class id {cls!r}") from None


def compute_raw_weights(counts: ClassCounts) -> list[float]:
    """Square-root-smoothed inverse-frequency weight per class."""
    c = counts.total
    n = counts.num_classes
    return [math.sqrt(c / (c_i * n)) for c_i in counts.counts]


def normalize_weights(counts: ClassCounts, raw: list[float]) -> list[float]:
    """Rescale raw weights so weighted sample mass equals the true total."""
    if any(a <= 0 for a in raw):
        raise WeightError("raw weights must be positive")
    c = counts.total
    denom = sum(c_j * a_j for c_j, a_j in zip(counts.counts, raw))
    return [a * c / denom for a in raw]


def build_table(counts: ClassCounts) -> ClassWeightTable:
    raw = compute_raw_weights(counts)
    return ClassWeightTable(
        classes=counts.classes,
        counts=counts.counts,
        raw=tuple(raw),
        normalized=tuple(normalize_weights(counts, raw)),
    )


def counts_from_manifest(manifest: CorpusManifest, factor: str) -> ClassCounts:
    """Tally per-speaker or per-language utterance counts from a manifest."""
    if factor not in ("speaker", "language"):
        raise WeightError(f"factor must be 'speaker' or 'language', got {factor!r}")
    tally: dict[str, int] = {}
    for entry in manifest.entries:
        key = entry.speaker if factor == "speaker" else entry.language
        tally[key] = tally.get(key, 0) + 1
    classes = tuple(sorted(tally))
    return ClassCounts(classes=classes, counts=tuple(tally[c] for c in classes))


@dataclass(frozen=True)
class SampleWeights:
    """Per-sample loss weights from independent speaker/language tables.

    mode ``speaker``: the speaker-class weight (monolingual multi-speaker
    models). mode ``both``: product of speaker and language weights
    (multilingual models). mode ``language``: language weight only.
    """

    mode: str
    speaker_table: ClassWeightTable | None = None
    language_table: ClassWeightTable | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise WeightError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in ("speaker", "both") and self.speaker_table is None:
            raise WeightError(f"mode {self.mode!r} needs a speaker table")
        if self.mode in ("language", "both") and self.language_table is None:
            raise WeightError(f"mode {self.mode!r} needs a language table")

    def for_sample(self, speaker: str, language: str) -> float:
        w = 1.0
        if self.mode in ("speaker", "both"):
            w *= self.speaker_table.weight(speaker)
        if self.mode in ("language", "both"):
            w *= self.language_table.weight(language)
        return w


def weights_from_manifest(manifest: CorpusManifest, mode: str) -> SampleWeights:
    speaker_table = language_table = None
    if mode in ("speaker", "both"):
        speaker_table = build_table(counts_from_manifest(manifest, "speaker"))
    if mode in ("language", "both"):
        language_table = build_table(counts_from_manifest(manifest, "language"))
    return SampleWeights(mode=mode, speaker_table=speaker_table, language_table=language_table)


def uniform_weights() -> SampleWeights:
    """Weights that are exactly 1.0 for every sample (unweighted training)."""
    table = ClassWeightTable(classes=(), counts=(), raw=(), normalized=())
    return _UniformWeights(mode="speaker", speaker_table=table)


class _UniformWeights(SampleWeights):
    def for_sample(self, speaker: str, language: str) -> float:
        return 1.0


def format_table(table: ClassWeightTable, factor: str) -> str:
    """Render one weight table as tab-separated text."""
    lines = ["factor\tclass\tcount\traw_weight\tnormalized_weight"]
    for cls, cnt, a, na in zip(table.classes, table.counts, table.raw, table.normalized):
        lines.append(f"{factor}\t{cls}\t{cnt}\t{a:.6f}\t{na:.6f}")
    return "\n".join(lines)
