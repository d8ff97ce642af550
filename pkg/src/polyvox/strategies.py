"""Data-combination strategies: named recipes mapping (speaker, language)
to sentence counts, materialized into training manifests from a corpus pool.

The builtin family covers single-speaker baselines (SING-*), a monolingual
multi-speaker reference (MONO-2k+16k) and the multilingual variants (MULT-*)
that differ in how auxiliary foreign-language data is added: one large
speaker, two speakers of one language, two languages, or many small
speakers across many languages. The two 32k-mass variants
(MULT-2k+2x16k and MULT-2k+16x2k) deliberately add the same total amount
of auxiliary speech in different shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusManifest

TARGET_SPEAKER = "target"
TARGET_LANGUAGE = "en"

# 13 European languages plus Arabic; nl and fr carry two speakers each so
# that 16 auxiliary speakers span 14 languages. The per-language speaker
# allocation is a workbench choice; only the 16/14 totals are fixed.
WIDE_LANGUAGES = ("nl", "nl", "fr", "fr", "de", "es", "it", "pt",
                  "pl", "sv", "da", "fi", "cs", "hu", "el", "ar")


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class SpecEntry:
    speaker: str
    language: str
    sentences: int


@dataclass(frozen=True)
class StrategySpec:
    name: str
    target: SpecEntry
    auxiliaries: tuple[SpecEntry, ...] = ()

    def __post_init__(self):
        for e in self.entries():
            if e.sentences < 0:
                raise StrategyError(f"{self.name}: negative sentence count for {e.speaker!r}")
        speakers = [e.speaker for e in self.entries()]
        if len(set(speakers)) != len(speakers):
            raise StrategyError(f"{self.name}: duplicate speakers in spec")

    def entries(self) -> tuple[SpecEntry, ...]:
        return (self.target,) + self.auxiliaries

    def total_sentences(self) -> int:
        return sum(e.sentences for e in self.entries())

    def auxiliary_sentences(self) -> int:
        return sum(e.sentences for e in self.auxiliaries)

    def languages(self) -> list[str]:
        seen = []
        for e in self.entries():
            if e.language not in seen:
                seen.append(e.language)
        return seen


def _aux(speaker: str, language: str, n: int) -> SpecEntry:
    return SpecEntry(speaker=speaker, language=language, sentences=n)


def builtin_specs() -> list[StrategySpec]:
    """The experiment's strategy family, target speaker plus auxiliaries."""
    tgt = lambda n: SpecEntry(TARGET_SPEAKER, TARGET_LANGUAGE, n)
    wide = tuple(_aux(f"aux-{lang}-{i}", lang, 2000)
                 for i, lang in enumerate(WIDE_LANGUAGES, start=1))
    return [
        StrategySpec("SING-2k", tgt(2000)),
        StrategySpec("SING-4k", tgt(4000)),
        StrategySpec("SING-8k", tgt(8000)),
        StrategySpec("MULT-2k+16k", tgt(2000), (_aux("aux-nl-1", "nl", 16000),)),
        StrategySpec("MULT-4k+16k", tgt(4000), (_aux("aux-nl-1", "nl", 16000),)),
        StrategySpec("MULT-8k+16k", tgt(8000), (_aux("aux-nl-1", "nl", 16000),)),
        StrategySpec("MONO-2k+16k", tgt(2000), (_aux("aux-en-1", "en", 16000),)),
        StrategySpec("MULT-2k+2x16k", tgt(2000),
                     (_aux("aux-nl-1", "nl", 16000), _aux("aux-nl-2", "nl", 16000))),
        StrategySpec("MULT-2k+16k+16k", tgt(2000),
                     (_aux("aux-nl-1", "nl", 16000), _aux("aux-fr-1", "fr", 16000))),
        StrategySpec("MULT-2k+16x2k", tgt(2000), wide),
    ]


def get_builtin(name: str) -> StrategySpec:
    for spec in builtin_specs():
        if spec.name == name:
            return spec
    known = ", ".join(s.name for s in builtin_specs())
    raise StrategyError(f"unknown strategy {name!r} (builtin: {known})")


def materialize(spec: StrategySpec, pool: CorpusManifest, seed: int) -> CorpusManifest:
    """Sample the spec's counts from the pool, without replacement.

    Selection is seeded and deterministic. If any entry cannot be filled,
    the error lists every shortfall.
    """
    by_class: dict[tuple[str, str], list] = {}
    for entry in pool.entries:
        by_class.setdefault((entry.speaker, entry.language), []).append(entry)
    for candidates in by_class.values():
        candidates.sort(key=lambda e: e.id)

    shortfalls = []
    for e in spec.entries():
        have = len(by_class.get((e.speaker, e.language), ()))
        if have < e.sentences:
            shortfalls.append(f"({e.speaker}, {e.language}): need {e.sentences}, pool has {have}")
    if shortfalls:
        raise StrategyError(f"{spec.name}: insufficient data: " + "; ".join(shortfalls))

    rng = np.random.default_rng(seed)
    selected = []
    for e in spec.entries():
        if e.sentences == 0:
            continue
        candidates = by_class[(e.speaker, e.language)]
        order = rng.permutation(len(candidates))[:e.sentences]
        chosen = [candidates[i] for i in sorted(order)]
        selected.extend(chosen)
    return CorpusManifest(entries=selected, root=pool.root)


def load_spec_file(path: str | Path) -> StrategySpec:
    """Parse a custom strategy spec.

    Format, one directive per line (``#`` comments allowed)::

        name: MY-STRATEGY
        target: <speaker> <language> <count>
        aux: <speaker> <language> <count>
    """
    name = None
    target = None
    auxiliaries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, _, rest = stripped.partition(":")
        key = key.strip().lower()
        rest = rest.strip()
        if key == "name":
            name = rest
        elif key in ("target", "aux"):
            fields = rest.split()
            if len(fields) != 3:
                raise StrategyError(f"{path}:{lineno}: expected '<speaker> <language> <count>'")
            try:
                count = int(fields[2])
            except ValueError:
                raise StrategyError(f"{path}:{lineno}: count {fields[2]!r} is not an integer") from None
            entry = SpecEntry(fields[0], fields[1], count)
            if key == "target":
                if target is not None:
                    raise StrategyError(f"{path}:{lineno}: duplicate target line")
                target = entry
            else:
                auxiliaries.append(entry)
        else:
            raise StrategyError(f"{path}:{lineno}: unknown directive {key!r}")
    if name is None or target is None:
        raise StrategyError(f"{path}: spec needs both 'name' and 'target' lines")
    return StrategySpec(name=name, target=target, auxiliaries=tuple(auxiliaries))
