"""Difficulty scoring and temperature-scheduled epoch sampling.

The student's own predictions are compared against the training targets
with a normalized edit-distance similarity. Each sample's sampling weight
is ``max(0.01, similarity) ** tau``: a positive temperature favors easy
samples, a negative one favors hard samples, and tau = 0 is uniform. The
0.01 floor keeps the power well defined when the similarity is zero and a
negative exponent is in play. Temperatures follow a linear schedule that
starts at the second epoch (the first epoch is always trained on the full,
unweighted dataset, since no predictions exist yet).

Named schedules (t_start, t_step over 8 epochs, so tau at epoch 8 is
t_start + 6 * t_step):

    O = (0, 0)        constant uniform baseline
    A = (0.25, -1/12) ends at -0.25
    B = (0.5,  -1/6)  ends at -0.5
    C = (1,    -1/3)  ends at -1
    D = (2,    -2/3)  ends at -2

Schedule arithmetic is done on exact rationals so endpoint temperatures
come out exact in floating point.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import log
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError

logger = logging.getLogger(__name__)

MIN_SIMILARITY = 0.01

NAMED_SCHEDULES: dict[str, tuple[Fraction, Fraction]] = {
    "O": (Fraction(0), Fraction(0)),
    "A": (Fraction(1, 4), Fraction(-1, 12)),
    "B": (Fraction(1, 2), Fraction(-1, 6)),
    "C": (Fraction(1), Fraction(-1, 3)),
    "D": (Fraction(2), Fraction(-2, 3)),
}

SAMPLING_MODES = ("without_replacement", "with_replacement")


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        append = current.append
        for j, cb in enumerate(b, start=1):
            change = previous[j - 1]
            if ca != cb:
                change += 1
            append(min(previous[j] + 1, current[j - 1] + 1, change))
        previous = current
    return previous[-1]


def minify_json(text: str) -> str | None:
    """Re-serialize ``text`` without insignificant whitespace, or None if it is not JSON.

    Object key order is preserved as parsed.
    """
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError:
        return None
    return json.dumps(parsed, separators=(",", ":"), ensure_ascii=False)


def normalize_answer(text: str) -> str:
    """Canonical form used on both sides of a similarity comparison.

    Valid JSON is minified with key order intact (whitespace inside string
    literals survives); anything else is returned with surrounding
    whitespace trimmed.
    """
    minified = minify_json(text)
    if minified is not None:
        return minified
    return text.strip()


def similarity(a: str, b: str, variant: str = "max_length") -> float:
    """Normalized edit-distance similarity in [0, 1]; 1.0 iff the strings are equal.

    ``max_length`` divides the edit distance by the longer length (the
    default). ``generalized`` uses the length-sum normalization
    2*d / (|a| + |b| + d) instead. Two empty strings score 1.0 under both.
    """
    if variant not in ("max_length", "generalized"):
        raise ValidationError(f"unknown similarity variant: {variant!r}")
    dist = levenshtein(a, b)
    if variant == "max_length":
        longest = max(len(a), len(b))
        if longest == 0:
            return 1.0
        return 1.0 - dist / longest
    if dist == 0:
        return 1.0
    return 1.0 - (2.0 * dist) / (len(a) + len(b) + dist)


def weight(sim: float, tau: float) -> float:
    """Sampling weight max(0.01, sim) ** tau; strictly positive for finite inputs."""
    return max(MIN_SIMILARITY, sim) ** tau


def _as_fraction(value) -> Fraction:
    # Floats go through their decimal repr so "0.1" means one tenth, not
    # the nearest binary double.
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class CurriculumSchedule:
    """Linear temperature trajectory: tau at epoch e (e >= 2) is t_start + t_step * (e - 2)."""

    name: str
    t_start: Fraction
    t_step: Fraction
    total_epochs: int = 8

    def __post_init__(self):
        if self.total_epochs < 2:
            raise ValidationError("total_epochs must be at least 2")
        if self.name in NAMED_SCHEDULES:
            if (self.t_start, self.t_step) != NAMED_SCHEDULES[self.name]:
                raise ValidationError(
                    f"schedule {self.name} must carry its canonical (t_start, t_step) tuple"
                )
        elif self.name != "custom":
            raise ValidationError(f"unknown schedule name: {self.name!r}")

    @classmethod
    def named(cls, name: str, total_epochs: int = 8) -> "CurriculumSchedule":
        if name not in NAMED_SCHEDULES:
            raise ValidationError(f"unknown schedule name: {name!r} (expected one of {sorted(NAMED_SCHEDULES)})")
        t_start, t_step = NAMED_SCHEDULES[name]
        return cls(name=name, t_start=t_start, t_step=t_step, total_epochs=total_epochs)

    @classmethod
    def custom(cls, t_start, t_step, total_epochs: int = 8) -> "CurriculumSchedule":
        return cls(
            name="custom",
            t_start=_as_fraction(t_start),
            t_step=_as_fraction(t_step),
            total_epochs=total_epochs,
        )


def schedule_tau(schedule: CurriculumSchedule, epoch: int) -> float:
    """Temperature for a curriculum epoch.

    Epoch 1 has no temperature (it is trained unweighted), so valid epochs
    are 2..total_epochs. Epoch 2 returns t_start exactly; each later epoch
    adds one t_step.
    """
    if not 2 <= epoch <= schedule.total_epochs:
        raise ValidationError(
            f"epoch {epoch} out of curriculum range [2, {schedule.total_epochs}]"
        )
    steps = epoch - 2
    return float(schedule.t_start + schedule.t_step * steps)


@dataclass(frozen=True)
class PredictionRecord:
    """One student output for one sample, tagged with the epoch that produced it."""

    sample_id: str
    epoch: int
    model_tag: str
    output_text: str

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "epoch": self.epoch,
            "model_tag": self.model_tag,
            "output_text": self.output_text,
        }

    @classmethod
    def from_row(cls, row: dict) -> "PredictionRecord":
        try:
            return cls(
                sample_id=str(row["sample_id"]),
                epoch=int(row["epoch"]),
                model_tag=str(row["model_tag"]),
                output_text=str(row["output_text"]),
            )
        except KeyError as exc:
            raise ValidationError(f"prediction record missing field {exc}") from exc


@dataclass(frozen=True)
class DistillationExample:
    """One training row of an epoch dataset: prompt, teacher target, gold."""

    sample_id: str
    prompt: str
    target: str
    gold: dict

    def to_row(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "prompt": self.prompt,
            "target": self.target,
            "gold": dict(self.gold),
        }

    @classmethod
    def from_row(cls, row: dict) -> "DistillationExample":
        try:
            return cls(
                sample_id=str(row["sample_id"]),
                prompt=str(row["prompt"]),
                target=str(row["target"]),
                gold=dict(row["gold"]),
            )
        except KeyError as exc:
            raise ValidationError(f"distillation example missing field {exc}") from exc


def score_pool(
    predictions: Iterable[PredictionRecord],
    targets: Mapping[str, str],
    variant: str = "max_length",
) -> tuple[list[tuple[str, float]], list[str]]:
    """Similarity of each sample's prediction to its training target.

    Both sides go through normalize_answer first. Samples with no
    prediction score 0.0 (an unanswered sample is maximally hard) and are
    returned in the missing list. Results are ordered by sample_id.
    """
    by_id: dict[str, str] = {}
    for rec in predictions:
        if rec.sample_id in by_id:
            raise ValidationError(
                f"duplicate prediction for sample {rec.sample_id!r}; "
                "score_pool expects one snapshot (single epoch and model_tag)"
            )
        by_id[rec.sample_id] = rec.output_text
    scores: list[tuple[str, float]] = []
    missing: list[str] = []
    for sample_id in sorted(targets):
        if sample_id not in by_id:
            missing.append(sample_id)
            scores.append((sample_id, 0.0))
            continue
        pred = normalize_answer(by_id[sample_id])
        target = normalize_answer(targets[sample_id])
        scores.append((sample_id, similarity(pred, target, variant=variant)))
    if missing:
        logger.warning("score_pool: %d of %d samples had no prediction, scored 0.0", len(missing), len(scores))
    return scores, missing


@dataclass(frozen=True)
class EpochDataset:
    """One sampled training epoch: ordered ids plus the draw's provenance."""

    epoch: int
    tau: float
    ordered_sample_ids: list[str]
    manifest: dict = field(default_factory=dict)


def build_epoch(
    pool: Sequence[tuple[str, float]],
    tau: float,
    drawn_size: int,
    seed: int,
    mode: str = "without_replacement",
    epoch: int = 0,
    schedule_name: str = "custom",
    similarity_source_epoch: int | None = None,
) -> EpochDataset:
    """Draw an ordered epoch dataset with probabilities proportional to weight(sim, tau).

    Without replacement the draw order is realized with exponential race
    keys (Exp(1) / weight, ascending), which is distributed identically to
    successive renormalized draws, so for tau > 0 easy samples tend to come
    first. With replacement it is a plain weighted multinomial draw. Both
    are deterministic for a fixed seed.
    """
    if mode not in SAMPLING_MODES:
        raise ValidationError(f"unknown sampling mode: {mode!r}")
    if drawn_size < 0:
        raise ValidationError("drawn_size must be non-negative")
    if mode == "without_replacement" and drawn_size > len(pool):
        raise ValidationError(
            f"drawn_size {drawn_size} exceeds pool size {len(pool)} for sampling without replacement"
        )
    for sample_id, sim in pool:
        if not 0.0 <= sim <= 1.0:
            raise ValidationError(f"similarity for {sample_id!r} out of [0, 1]: {sim}")

    rng = random.Random(seed)
    ids = [sample_id for sample_id, _ in pool]
    weights = [weight(sim, tau) for _, sim in pool]

    if mode == "without_replacement":
        # -log(1 - u) is a unit exponential; dividing by the weight makes
        # the smallest key win with probability w_i / sum(w).
        keys = [-log(1.0 - rng.random()) / w for w in weights]
        order = sorted(range(len(ids)), key=keys.__getitem__)
        drawn = [ids[i] for i in order[:drawn_size]]
    else:
        drawn = rng.choices(ids, weights=weights, k=drawn_size) if drawn_size else []

    manifest = {
        "seed": seed,
        "pool_size": len(pool),
        "drawn_size": len(drawn),
        "schedule": schedule_name,
        "similarity_source_epoch": similarity_source_epoch,
        "mode": mode,
    }
    return EpochDataset(epoch=epoch, tau=tau, ordered_sample_ids=drawn, manifest=manifest)
