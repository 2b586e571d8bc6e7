"""Certainty-based golden-question selection and annotator group analysis.

Works on externally scored preference pairs: each sample carries two
reward-model scores, and the certainty of its implied preference is
``2 * |1/2 - p_hat|`` with ``p_hat = sigmoid(reward1 - reward2)`` --
computed as ``tanh(|reward1 - reward2| / 2)``, which is the same quantity
without overflow and saturates to exactly 1.0 for extreme gaps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .behavior_models import LATENT_FACTOR, BehaviorModel

REAL = "REAL"
INSTRUCTED = "INSTRUCTED"
CONDITIONS = (REAL, INSTRUCTED)

SAMPLE_COLUMNS = ("id", "reward1", "reward2", "human_label")
RECORD_COLUMNS = ("annotator_id", "condition", "golden_correct", "golden_total",
                  "nongolden_correct", "nongolden_total")


@dataclass(frozen=True)
class ScoredSample:
    id: str
    reward1: float
    reward2: float
    human_label: int | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.reward1) and math.isfinite(self.reward2)):
            raise ValueError(f"sample {self.id!r}: rewards must be finite")
        if self.human_label not in (None, 0, 1):
            raise ValueError(f"sample {self.id!r}: human_label must be 0 or 1")


@dataclass(frozen=True)
class GoldenSet:
    ids: list[str]
    certainties: list[float]

    def __post_init__(self):
        if len(self.ids) != len(self.certainties):
            raise ValueError("ids and certainties must align")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("golden ids must be distinct")
        if any(b > a for a, b in zip(self.certainties, self.certainties[1:])):
            raise ValueError("certainties must be non-increasing")


@dataclass(frozen=True)
class AnnotatorRecord:
    annotator_id: str
    golden_correct: int
    golden_total: int
    nongolden_correct: int
    nongolden_total: int
    condition: str = REAL

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")
        if not 0 <= self.golden_correct <= self.golden_total:
            raise ValueError("golden_correct must lie in [0, golden_total]")
        if not 0 <= self.nongolden_correct <= self.nongolden_total:
            raise ValueError("nongolden_correct must lie in [0, nongolden_total]")
        if self.golden_total <= 0 or self.nongolden_total <= 0:
            raise ValueError("question totals must be positive")

    @property
    def all_golden_correct(self) -> bool:
        return self.golden_correct == self.golden_total

    @property
    def nongolden_accuracy(self) -> float:
        return self.nongolden_correct / self.nongolden_total


@dataclass(frozen=True)
class GroupGapReport:
    mean_acc_correct: float | None
    mean_acc_incorrect: float | None
    gap: float | None
    n_correct_group: int
    n_incorrect_group: int


@dataclass(frozen=True)
class BucketRow:
    fraction: float
    accuracy: float
    count: int
    ties: int


def certainty(reward1: float, reward2: float) -> float:
    """How unambiguous a preference pair is, in [0, 1]."""
    if not (math.isfinite(reward1) and math.isfinite(reward2)):
        raise ValueError("rewards must be finite")
    return math.tanh(abs(reward1 - reward2) / 2.0)


def _by_certainty(samples: list[ScoredSample]) -> list[tuple[float, ScoredSample]]:
    """Samples with their certainties, most certain first, ties by ascending id."""
    scored = [(certainty(s.reward1, s.reward2), s) for s in samples]
    return sorted(scored, key=lambda cs: (-cs[0], cs[1].id))


def select_golden(samples: list[ScoredSample], n: int,
                  min_certainty: float = 0.0) -> GoldenSet:
    """The n most certain samples, optionally filtered by a certainty floor."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if n > len(samples):
        raise ValueError(f"n={n} exceeds the {len(samples)} available samples")
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    ranked = _by_certainty(samples)
    if min_certainty > 0.0:
        ranked = [(c, s) for c, s in ranked if c >= min_certainty]
        if len(ranked) < n:
            raise ValueError(
                f"only {len(ranked)} samples reach certainty {min_certainty}, need {n}")
    top = ranked[:n]
    return GoldenSet(ids=[s.id for _, s in top], certainties=[c for c, _ in top])


def bucket_accuracy(samples: list[ScoredSample],
                    fractions: list[float]) -> list[BucketRow]:
    """Reward-model prediction accuracy on the most-certain fraction of samples.

    Predicts label 1 when reward1 > reward2; exact reward ties predict 1
    and are tallied in the ``ties`` column.
    """
    if not samples:
        raise ValueError("no samples given")
    if any(s.human_label is None for s in samples):
        raise ValueError("bucket accuracy needs human labels on every sample")
    if not fractions:
        raise ValueError("no fractions given")
    fr = list(fractions)
    if any(not 0.0 < f <= 1.0 for f in fr):
        raise ValueError("fractions must lie in (0, 1]")
    if sorted(fr) != fr:
        raise ValueError("fractions must be sorted ascending")
    ranked = _by_certainty(samples)
    rows = []
    for f in fr:
        count = math.ceil(f * len(samples))
        chunk = ranked[:count]
        correct = 0
        ties = 0
        for _, s in chunk:
            if s.reward1 == s.reward2:
                ties += 1
            pred = 1 if s.reward1 >= s.reward2 else 0
            correct += int(pred == s.human_label)
        rows.append(BucketRow(fraction=f, accuracy=correct / count,
                              count=count, ties=ties))
    return rows


def group_gap_analysis(
        records: list[AnnotatorRecord]) -> dict[str, GroupGapReport]:
    """Per-condition accuracy gap between all-golden-correct and the rest.

    Group means weight each annotator equally.  An empty group leaves its
    mean, and the gap, absent.
    """
    if not records:
        raise ValueError("no annotator records given")
    out: dict[str, GroupGapReport] = {}
    for cond in CONDITIONS:
        here = [r for r in records if r.condition == cond]
        if not here:
            continue
        correct = [r.nongolden_accuracy for r in here if r.all_golden_correct]
        incorrect = [r.nongolden_accuracy for r in here if not r.all_golden_correct]
        mean_c = sum(correct) / len(correct) if correct else None
        mean_i = sum(incorrect) / len(incorrect) if incorrect else None
        gap = mean_c - mean_i if (mean_c is not None and mean_i is not None) else None
        out[cond] = GroupGapReport(
            mean_acc_correct=mean_c,
            mean_acc_incorrect=mean_i,
            gap=gap,
            n_correct_group=len(correct),
            n_incorrect_group=len(incorrect),
        )
    return out


def simulate_annotator_population(model: BehaviorModel, theta_committed: float,
                                  theta_lazy: float, frac_lazy: float,
                                  q_golden: int, q_nongolden: int,
                                  n_annotators: int, seed: int,
                                  condition: str = REAL) -> list[AnnotatorRecord]:
    """Synthetic annotator panel answering certain questions at its own commitment.

    Each annotator shirks with probability ``frac_lazy`` and then answers
    every question correctly with the committed-mode probability
    ``(1 + theta) / 2`` of its chosen commitment level.
    """
    if model.kind != LATENT_FACTOR:
        raise ValueError("population simulation uses the latent-factor model")
    model.domain.require(theta_committed, "theta_committed")
    model.domain.require(theta_lazy, "theta_lazy")
    if not 0.0 <= frac_lazy <= 1.0:
        raise ValueError("frac_lazy must lie in [0, 1]")
    if min(q_golden, q_nongolden, n_annotators) < 1:
        raise ValueError("question and annotator counts must be positive")
    p_committed = 0.5 + 0.5 * theta_committed
    p_lazy = 0.5 + 0.5 * theta_lazy
    block = 1 + q_golden + q_nongolden
    records = []
    for i in range(n_annotators):
        u = kernels.uniforms(block, seed, i * block)
        lazy = u[0] < frac_lazy
        p = p_lazy if lazy else p_committed
        golden_correct = int(np.sum(u[1:1 + q_golden] < p))
        nongolden_correct = int(np.sum(u[1 + q_golden:] < p))
        records.append(AnnotatorRecord(
            annotator_id=f"ann{i:04d}",
            golden_correct=golden_correct,
            golden_total=q_golden,
            nongolden_correct=nongolden_correct,
            nongolden_total=q_nongolden,
            condition=condition,
        ))
    return records


# ---------------------------------------------------------------------------
# file ingestion
# ---------------------------------------------------------------------------

def _require_columns(have, need, path) -> None:
    missing = [c for c in need if c not in have]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")


def read_scored_samples(path: str | Path) -> list[ScoredSample]:
    """Load reward-scored samples from CSV or JSON-lines."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        return _read_samples_jsonl(path)
    return _read_samples_csv(path)


def _parse_label(raw, path, line) -> int | None:
    if raw is None or raw == "":
        return None
    try:
        label = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{path}, line {line}: human_label must be 0 or 1") from None
    if label not in (0, 1):
        raise ValueError(f"{path}, line {line}: human_label must be 0 or 1")
    return label


def _read_samples_csv(path: Path) -> list[ScoredSample]:
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames or [], SAMPLE_COLUMNS, path)
        for line, row in enumerate(reader, start=2):
            try:
                r1 = float(row["reward1"])
                r2 = float(row["reward2"])
            except (TypeError, ValueError):
                raise ValueError(
                    f"{path}, line {line}: rewards must be numeric") from None
            samples.append(ScoredSample(
                id=row["id"],
                reward1=r1,
                reward2=r2,
                human_label=_parse_label(row["human_label"], path, line),
            ))
    if not samples:
        raise ValueError(f"{path}: no samples found")
    return samples


def _read_samples_jsonl(path: Path) -> list[ScoredSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}, line {line}: invalid JSON ({exc.msg})") from None
            _require_columns(obj.keys(), ("id", "reward1", "reward2"), path)
            samples.append(ScoredSample(
                id=str(obj["id"]),
                reward1=float(obj["reward1"]),
                reward2=float(obj["reward2"]),
                human_label=_parse_label(obj.get("human_label"), path, line),
                meta={k: str(v) for k, v in obj.get("meta", {}).items()},
            ))
    if not samples:
        raise ValueError(f"{path}: no samples found")
    return samples


def read_annotator_records(path: str | Path) -> list[AnnotatorRecord]:
    """Load per-annotator golden/non-golden outcomes from CSV."""
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames or [], RECORD_COLUMNS, path)
        for line, row in enumerate(reader, start=2):
            try:
                records.append(AnnotatorRecord(
                    annotator_id=row["annotator_id"],
                    condition=row["condition"],
                    golden_correct=int(row["golden_correct"]),
                    golden_total=int(row["golden_total"]),
                    nongolden_correct=int(row["nongolden_correct"]),
                    nongolden_total=int(row["nongolden_total"]),
                ))
            except ValueError as exc:
                raise ValueError(f"{path}, line {line}: {exc}") from None
    if not records:
        raise ValueError(f"{path}: no annotator records found")
    return records
