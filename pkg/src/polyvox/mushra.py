"""MUSHRA test construction, response filtering and analysis.

A design holds the rated systems, one reference/anchor system whose audio
is a resynthesis from ground-truth features, and three disjoint test sets
of sentences (ten panels each by default). Every panel presents the
resynthesis twice: openly as the reference and hidden among the rated
stimuli. Panel order, within-panel stimulus order, and initial slider
values are drawn from a generator keyed by (experiment seed, participant),
so every participant sees a private randomization that is reproducible.

Analysis: anomalous records (exactly one non-resynthesis stimulus rated at
or above the resynthesis plus a margin) are discarded, per-system
mean/median/average-rank are tabulated, and all pairwise system contrasts
are tested with the signed-rank test under a Holm-Bonferroni family
correction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stats import holm_bonferroni, wilcoxon_signed_rank

DEFAULT_ANOMALY_MARGIN = 10


class MushraError(ValueError):
    pass


@dataclass(frozen=True)
class MushraDesign:
    """Experiment layout: systems, sentences per test set, audio locations."""

    name: str
    systems: tuple[str, ...]                  # rated systems, resynthesis excluded
    resynthesis: str
    test_sets: tuple[tuple[str, ...], ...]    # sentence ids per test set
    audio: dict[str, dict[str, Path]]         # system -> sentence -> audio path
    seed: int = 0
    panels_per_set: int = 10

    def __post_init__(self):
        if self.resynthesis in self.systems:
            raise MushraError("resynthesis must not appear in the rated system list")
        if len(set(self.systems)) != len(self.systems):
            raise MushraError("duplicate system ids")
        all_sentences = [s for ts in self.test_sets for s in ts]
        if len(set(all_sentences)) != len(all_sentences):
            raise MushraError("test sets must be disjoint in sentences")
        for i, ts in enumerate(self.test_sets):
            if len(ts) != self.panels_per_set:
                raise MushraError(
                    f"test set {i} has {len(ts)} sentences, design says {self.panels_per_set}")
        for system in list(self.systems) + [self.resynthesis]:
            table = self.audio.get(system)
            if table is None:
                raise MushraError(f"no audio table for system {system!r}")
            for sentence in all_sentences:
                if sentence not in table:
                    raise MushraError(f"system {system!r} missing audio for sentence {sentence!r}")

    @property
    def num_test_sets(self) -> int:
        return len(self.test_sets)

    @property
    def stimuli_per_panel(self) -> int:
        return len(self.systems) + 1          # rated systems plus hidden resynthesis

    def all_systems(self) -> tuple[str, ...]:
        return self.systems + (self.resynthesis,)


def load_design(path: str | Path) -> MushraDesign:
    """Read an experiment config (JSON) and resolve audio paths."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    root = path.parent / raw.get("audio_root", ".")
    audio = {system: {sentence: root / rel for sentence, rel in table.items()}
             for system, table in raw["audio"].items()}
    return MushraDesign(
        name=raw["name"],
        systems=tuple(raw["systems"]),
        resynthesis=raw["resynthesis"],
        test_sets=tuple(tuple(ts) for ts in raw["test_sets"]),
        audio=audio,
        seed=int(raw.get("seed", 0)),
        panels_per_set=int(raw.get("panels_per_set", 10)),
    )


@dataclass(frozen=True)
class Stimulus:
    id: str
    system: str                               # hidden from raters
    audio_path: Path
    initial_slider: int


@dataclass(frozen=True)
class MushraPanel:
    id: str
    sentence: str
    reference_path: Path                      # visible reference (resynthesis)
    stimuli: tuple[Stimulus, ...]             # randomized order, one is the resynthesis

    def system_of(self, stimulus_id: str) -> str:
        for s in self.stimuli:
            if s.id == stimulus_id:
                return s.system
        raise MushraError(f"panel {self.id}: unknown stimulus {stimulus_id!r}")


def participant_rng(seed: int, participant: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}|{participant}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def generate_panels(design: MushraDesign, participant: str,
                    test_set: int) -> list[MushraPanel]:
    """Panels for one participant, in their private randomized order."""
    if not 0 <= test_set < design.num_test_sets:
        raise MushraError(f"test set index {test_set} out of range")
    rng = participant_rng(design.seed, participant)
    sentences = list(design.test_sets[test_set])
    panel_order = rng.permutation(len(sentences))
    systems = list(design.systems) + [design.resynthesis]
    panels = []
    for pos, sent_idx in enumerate(panel_order):
        sentence = sentences[sent_idx]
        order = rng.permutation(len(systems))
        sliders = rng.integers(0, 101, size=len(systems))
        stimuli = []
        for slot, sys_idx in enumerate(order):
            system = systems[sys_idx]
            audio = design.audio[system][sentence]
            if not Path(audio).is_file():
                raise MushraError(f"missing audio file {audio} ({system!r}, {sentence!r})")
            stimuli.append(Stimulus(id=f"p{pos}_s{slot}", system=system,
                                    audio_path=audio, initial_slider=int(sliders[slot])))
        ref = design.audio[design.resynthesis][sentence]
        if not Path(ref).is_file():
            raise MushraError(f"missing reference audio {ref} for sentence {sentence!r}")
        panels.append(MushraPanel(id=f"p{pos}", sentence=sentence,
                                  reference_path=ref, stimuli=tuple(stimuli)))
    return panels


@dataclass(frozen=True)
class ScoredRecord:
    """One accepted rating record, unblinded to system -> score."""

    participant: str
    panel_id: str
    sentence: str
    scores: dict[str, int]                    # system -> 0..100

    def __post_init__(self):
        for system, score in self.scores.items():
            if not 0 <= score <= 100:
                raise MushraError(f"score {score} for {system!r} outside [0, 100]")


def filter_anomalies(records: list[ScoredRecord], resynthesis: str,
                     margin: int = DEFAULT_ANOMALY_MARGIN
                     ) -> tuple[list[ScoredRecord], list[ScoredRecord]]:
    """Discard records where exactly one stimulus beats the hidden anchor.

    A record is anomalous iff exactly one non-resynthesis system scored at
    least ``resynthesis score + margin``. Records where several systems
    beat the anchor are kept: a consistent preference is not an outlier.
    """
    kept, discarded = [], []
    for rec in records:
        if resynthesis not in rec.scores:
            raise MushraError(f"record {rec.participant}/{rec.panel_id} lacks the resynthesis score")
        anchor = rec.scores[resynthesis]
        above = sum(1 for system, score in rec.scores.items()
                    if system != resynthesis and score >= anchor + margin)
        (discarded if above == 1 else kept).append(rec)
    return kept, discarded


@dataclass(frozen=True)
class SystemRow:
    system: str
    n: int
    mean: float
    median: float
    average_rank: float


@dataclass(frozen=True)
class PairwiseTest:
    system_a: str
    system_b: str
    n_pairs: int
    statistic: float
    p_value: float
    p_adjusted: float
    reject: bool
    degenerate: bool


@dataclass(frozen=True)
class AnalysisReport:
    rows: tuple[SystemRow, ...]
    pairwise: tuple[PairwiseTest, ...]
    alpha: float
    discarded: int
    flags: tuple[str, ...] = ()


def _panel_ranks(scores: dict[str, int], systems: list[str]) -> dict[str, float]:
    """Rank 1 = highest score; ties share the average rank."""
    values = sorted(((scores[s], s) for s in systems), key=lambda t: -t[0])
    ranks: dict[str, float] = {}
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[j + 1][0] == values[i][0]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[values[k][1]] = avg
        i = j + 1
    return ranks


def build_report(records: list[ScoredRecord], systems: list[str], alpha: float = 0.05,
                 discarded: int = 0) -> AnalysisReport:
    """Per-system score table plus Holm-corrected pairwise signed-rank tests.

    ``records`` must already be anomaly-filtered. Average ranks are
    computed within each panel record, then averaged per system.
    """
    flags = []
    per_system: dict[str, list[int]] = {s: [] for s in systems}
    per_system_ranks: dict[str, list[float]] = {s: [] for s in systems}
    for rec in records:
        present = [s for s in systems if s in rec.scores]
        if not present:
            raise MushraError(
                f"record {rec.participant}/{rec.panel_id} scores none of the listed systems")
        ranks = _panel_ranks(rec.scores, present)
        for s in present:
            per_system[s].append(rec.scores[s])
            per_system_ranks[s].append(ranks[s])

    rows = []
    for s in systems:
        scores = per_system[s]
        if not scores:
            flags.append(f"system {s!r} has no records")
            rows.append(SystemRow(system=s, n=0, mean=float("nan"),
                                  median=float("nan"), average_rank=float("nan")))
            continue
        rows.append(SystemRow(
            system=s, n=len(scores),
            mean=float(np.mean(scores)),
            median=float(np.median(scores)),
            average_rank=float(np.mean(per_system_ranks[s])),
        ))

    pairs = [(a, b) for i, a in enumerate(systems) for b in systems[i + 1:]]
    raw_results = []
    for a, b in pairs:
        paired = [rec for rec in records if a in rec.scores and b in rec.scores]
        xs = [rec.scores[a] for rec in paired]
        ys = [rec.scores[b] for rec in paired]
        if len(xs) < 2:
            raw_results.append((a, b, len(xs), 0.0, 1.0, True))
            flags.append(f"pair ({a}, {b}): too few records for a test")
            continue
        res = wilcoxon_signed_rank(xs, ys)
        if res.degenerate:
            flags.append(f"pair ({a}, {b}): all score differences zero")
        raw_results.append((a, b, len(xs), res.statistic, res.p_value, res.degenerate))

    corrected = holm_bonferroni([r[4] for r in raw_results], alpha) if raw_results else []
    pairwise = tuple(
        PairwiseTest(system_a=a, system_b=b, n_pairs=n, statistic=stat,
                     p_value=p, p_adjusted=c.p_adjusted, reject=c.reject,
                     degenerate=degen)
        for (a, b, n, stat, p, degen), c in zip(raw_results, corrected))
    return AnalysisReport(rows=tuple(rows), pairwise=pairwise, alpha=alpha,
                          discarded=discarded, flags=tuple(flags))


def boxplot_stats(records: list[ScoredRecord], systems: list[str]) -> list[dict]:
    """Per-system quartiles, mean, median and whisker span (1.5 IQR rule)."""
    out = []
    for s in systems:
        scores = np.array([rec.scores[s] for rec in records if s in rec.scores], dtype=float)
        if scores.size == 0:
            continue
        q1, med, q3 = np.percentile(scores, [25, 50, 75])
        iqr = q3 - q1
        lo = float(scores[scores >= q1 - 1.5 * iqr].min())
        hi = float(scores[scores <= q3 + 1.5 * iqr].max())
        out.append({"system": s, "n": int(scores.size), "mean": float(scores.mean()),
                    "median": float(med), "q1": float(q1), "q3": float(q3),
                    "whisker_low": lo, "whisker_high": hi})
    return out
