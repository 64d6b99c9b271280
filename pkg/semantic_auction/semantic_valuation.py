"""Semantic scores of a device and the energy valuation derived from them.

The score curves are lookup tables from feature dimension D to sentence similarity
and 1-gram BLEU, measured on a text-transmission model trained with D = 16.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

SIMILARITY_TABLE: Tuple[float, ...] = (
    0.39550235, 0.40009948, 0.40945041, 0.41866887, 0.42247792, 0.42490115,
    0.4295931, 0.43368545, 0.43733177, 0.4519554, 0.47728359, 0.51547686,
    0.55437698, 0.61085957, 0.7460733, 0.86169747,
)

BLEU_1GRAM_TABLE: Tuple[float, ...] = (
    0.0944817, 0.09667912, 0.09386748, 0.10047062, 0.10116262, 0.10300542,
    0.11076793, 0.11739845, 0.12781957, 0.15357989, 0.1940025, 0.27020956,
    0.34242301, 0.44607532, 0.65054165, 0.82109432,
)


@dataclass(frozen=True)
class ScoreCurve:
    """Lookup table d -> score for d = 1..d1."""

    name: str
    points: Tuple[Tuple[int, float], ...]

    def __post_init__(self) -> None:
        dims = [d for d, _ in self.points]
        if dims != list(range(1, len(dims) + 1)) or not dims:
            raise ValueError(f"{self.name}: dimensions must be 1..d1 without gaps")
        if any(not 0.0 <= s <= 1.0 for _, s in self.points):
            raise ValueError(f"{self.name}: scores must lie in [0, 1]")

    @classmethod
    def from_scores(cls, name: str, scores: Sequence[float]) -> "ScoreCurve":
        return cls(name=name, points=tuple((d + 1, float(s)) for d, s in enumerate(scores)))

    @property
    def d1(self) -> int:
        return len(self.points)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s in self.points], dtype=float)

    @property
    def mu_d(self) -> float:
        """Jitter half-width: mean of the successive score differences."""
        if self.d1 < 2:
            return 0.0
        return float(np.mean(np.diff(self.scores)))

    def score(self, d: int) -> float:
        return self.points[d - 1][1]


@dataclass(frozen=True)
class DeviceProfile:
    """Text workload and preference of one device."""

    N_s: int
    L: int
    b_f: int = 32
    j: float = 0.5

    def __post_init__(self) -> None:
        if self.N_s < 1 or self.L < 1 or self.b_f < 1:
            raise ValueError("N_s, L and b_f must be at least 1")
        if not 0.0 <= self.j <= 1.0:
            raise ValueError(f"j must lie in [0, 1], got {self.j}")

    @property
    def m(self) -> float:
        """Preference weight on BLEU."""
        return 1.0 - self.j


@dataclass(frozen=True)
class Valuation:
    sim: float
    bleu: float
    value: float
    D_effective: int


def builtin_curves() -> Tuple[ScoreCurve, ScoreCurve]:
    """Return the measured (similarity, 1-gram BLEU) curves for d = 1..16."""
    return (
        ScoreCurve.from_scores("similarity", SIMILARITY_TABLE),
        ScoreCurve.from_scores("bleu1gram", BLEU_1GRAM_TABLE),
    )


def feature_dim(bits: float, profile: DeviceProfile) -> float:
    """Feature dimension affordable with a bit budget, bits / (N_s * L * b_f)."""
    return bits / (profile.N_s * profile.L * profile.b_f)


def effective_dim(curve: ScoreCurve, D: float) -> int:
    """Floor D and clamp it to [0, d1]."""
    return int(min(max(math.floor(D), 0), curve.d1))


def lookup_score(curve: ScoreCurve, D: float) -> float:
    """Score of the curve at the decodable dimension; 0 below one dimension.

    Args:
        curve: Score table.
        D: Feature dimension, possibly fractional or above d1.

    Returns:
        Score at floor(D) clamped to [0, d1], or 0 when that is 0.
    """
    d = effective_dim(curve, D)
    if d < 1:
        return 0.0
    return curve.score(d)


def lookup_scores(curve: ScoreCurve, D: np.ndarray) -> np.ndarray:
    """Vectorised lookup_score."""
    table = np.concatenate(([0.0], curve.scores))
    idx = np.clip(np.floor(np.asarray(D, dtype=float)), 0, curve.d1).astype(int)
    return table[idx]


def jitter_score(rng: np.random.Generator, base: float, mu_d: float) -> float:
    """Sample uniformly in [base - mu_d, base + mu_d] and clamp to [0, 1]."""
    if mu_d < 0:
        raise ValueError(f"mu_d must be non-negative, got {mu_d}")
    return float(np.clip(rng.uniform(base - mu_d, base + mu_d), 0.0, 1.0))


def jitter_scores(rng: np.random.Generator, base: np.ndarray, mu_d: float) -> np.ndarray:
    """Vectorised jitter_score."""
    if mu_d < 0:
        raise ValueError(f"mu_d must be non-negative, got {mu_d}")
    base = np.asarray(base, dtype=float)
    return np.clip(rng.uniform(base - mu_d, base + mu_d), 0.0, 1.0)


def valuation(profile: DeviceProfile, sim: float, bleu: float, D_effective: int = 0) -> Valuation:
    """Energy valuation v = j * sim + (1 - j) * bleu.

    Raises:
        ValueError: If either score lies outside [0, 1].
    """
    for label, score in (("sim", sim), ("bleu", bleu)):
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"{label} score must lie in [0, 1], got {score}")
    value = profile.j * sim + profile.m * bleu
    return Valuation(sim=sim, bleu=bleu, value=value, D_effective=D_effective)


def device_valuation(
    rng: Optional[np.random.Generator],
    profile: DeviceProfile,
    bits: float,
    curves: Tuple[ScoreCurve, ScoreCurve],
) -> Valuation:
    """Full bits -> scores -> valuation pipeline for one device.

    Args:
        rng: Random generator for score jitter; None disables jitter.
        profile: Workload and preference of the device.
        bits: Bit budget from the physical layer.
        curves: (similarity, BLEU) lookup curves.

    Returns:
        The valuation. Devices below one feature dimension get zero scores, unjittered.
    """
    sim_curve, bleu_curve = curves
    D = feature_dim(bits, profile)
    d = effective_dim(sim_curve, D)
    sim = lookup_score(sim_curve, D)
    bleu = lookup_score(bleu_curve, D)
    if rng is not None and d >= 1:
        sim = jitter_score(rng, sim, sim_curve.mu_d)
        bleu = jitter_score(rng, bleu, bleu_curve.mu_d)
    return valuation(profile, sim, bleu, D_effective=d)


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def bleu_score(
    candidate: Sequence[str],
    reference: Sequence[str],
    weights: Sequence[float] = (1.0,),
) -> float:
    """Sentence BLEU with clipped i-gram precisions and no smoothing.

    log BLEU = min(1 - len(candidate) / len(reference), 0) + sum_i u_i log p_i

    Args:
        candidate: Recovered sentence tokens.
        reference: Original sentence tokens.
        weights: Weight u_i of the i-gram precision, i = 1..len(weights).

    Returns:
        The score in [0, 1]; 0 when any weighted precision is 0.

    Raises:
        ValueError: On empty input, weights not summing to 1, or an order longer than a sequence.
    """
    if not candidate or not reference:
        raise ValueError("candidate and reference must be non-empty")
    if not weights or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {list(weights)}")
    if len(weights) > min(len(candidate), len(reference)):
        raise ValueError("i-gram order exceeds sequence length")

    log_bleu = min(1.0 - len(candidate) / len(reference), 0.0)
    for order, weight in enumerate(weights, start=1):
        if weight == 0:
            continue
        cand_counts = _ngram_counts(candidate, order)
        ref_counts = _ngram_counts(reference, order)
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if clipped == 0:
            return 0.0
        log_bleu += weight * math.log(clipped / sum(cand_counts.values()))
    return math.exp(log_bleu)


def corpus_bleu_score(
    candidates: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    weights: Sequence[float] = (1.0,),
) -> float:
    """Mean sentence BLEU over aligned candidate/reference pairs."""
    if len(candidates) != len(references) or not candidates:
        raise ValueError("need equally many candidates and references, at least one")
    scores: List[float] = [bleu_score(c, r, weights) for c, r in zip(candidates, references)]
    return float(np.mean(scores))


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine of the angle between two embedding vectors.

    Raises:
        ValueError: On length mismatch, empty vectors or a zero-norm vector.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.size == 0:
        raise ValueError("vectors must be non-empty and of equal length")
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / norm, -1.0, 1.0))
