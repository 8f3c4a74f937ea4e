"""Shot-cut accuracy and embedding-based consistency metrics.

Shot Cut Accuracy compares a predicted cut list against ground truth:
an order-preserving one-to-one matching (dynamic programming) yields the
summed frame deviation of matched cuts plus a penalty for every unmatched
cut on either side; the total, normalized by the frame count, is mapped
through exp(-x) into (0, 1].

The consistency metrics operate on embedding vectors supplied by a
pluggable provider; the neural feature extractors themselves are external,
and the providers shipped here are synthetic (for tests and wiring).
"""

from __future__ import annotations

import json
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from hashlib import blake2b
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateGroupError,
    EmptyInputError,
    FrameCountMismatchError,
    IndexOutOfBoundsError,
    LayoutMismatchError,
    NonFiniteInputError,
    TooFewFramesError,
)


@dataclass(frozen=True)
class CutList:
    """Ordered shot-cut frame indices within a video of ``f_total`` frames.

    A cut at frame t means shot boundaries fall between frames t-1 and t,
    so valid cuts lie strictly inside (0, f_total).
    """

    f_total: int
    cuts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cuts", tuple(int(c) for c in self.cuts))
        if self.f_total < 1:
            raise ValueError(f"f_total must be >= 1, got {self.f_total}")
        for prev, cur in zip((0, *self.cuts), self.cuts):
            if cur <= prev:
                raise ValueError(f"cuts must be strictly ascending and > 0: {self.cuts}")
        if self.cuts and self.cuts[-1] >= self.f_total:
            raise ValueError(f"cut {self.cuts[-1]} not below f_total {self.f_total}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of the order-preserving cut matching."""

    pairs: tuple[tuple[int, int, int], ...]  # (pred cut, gt cut, |deviation|)
    unmatched_pred: int
    unmatched_gt: int
    e_matched: float
    e_penalty: float


@dataclass(frozen=True)
class ScaReport:
    pairs: tuple[tuple[int, int, int], ...]
    unmatched_pred: int
    unmatched_gt: int
    e_matched: float
    e_penalty: float
    nsd: float
    sca: float
    f_total: int
    penalty_per_unmatched: float


def match_cuts(pred: CutList, gt: CutList, penalty_per_unmatched: float) -> MatchResult:
    """Order-preserving one-to-one matching between two ascending cut lists.

    Minimizes sum(|p - g|) over matched pairs plus
    ``penalty_per_unmatched`` for each cut left unmatched on either side,
    by dynamic programming (the alignment recurrence with gap cost equal to
    the penalty). A cut is left unmatched automatically once its best
    deviation exceeds what two gap moves would cost.
    """
    if pred.f_total != gt.f_total:
        raise FrameCountMismatchError(
            f"pred f_total {pred.f_total} != gt f_total {gt.f_total}"
        )
    if not penalty_per_unmatched > 0:
        raise ValueError(f"penalty must be > 0, got {penalty_per_unmatched}")

    p, g = pred.cuts, gt.cuts
    n, m = len(p), len(g)
    pen = float(penalty_per_unmatched)
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = cost[i - 1][0] + pen
    for j in range(1, m + 1):
        cost[0][j] = cost[0][j - 1] + pen
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost[i][j] = min(
                cost[i - 1][j - 1] + abs(p[i - 1] - g[j - 1]),
                cost[i - 1][j] + pen,
                cost[i][j - 1] + pen,
            )

    # Traceback by re-ranking the candidate moves at each cell rather than
    # testing float equality against cost[i][j]; ties prefer match over
    # skip-pred over skip-gt (lower tag wins).
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        candidates = []
        if i > 0 and j > 0:
            candidates.append((cost[i - 1][j - 1] + abs(p[i - 1] - g[j - 1]), 0))
        if i > 0:
            candidates.append((cost[i - 1][j] + pen, 1))
        if j > 0:
            candidates.append((cost[i][j - 1] + pen, 2))
        move = min(candidates)[1]
        if move == 0:
            pairs.append((p[i - 1], g[j - 1], abs(p[i - 1] - g[j - 1])))
            i, j = i - 1, j - 1
        elif move == 1:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    e_matched = float(sum(dev for _, _, dev in pairs))
    unmatched = (n - len(pairs)) + (m - len(pairs))
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_pred=n - len(pairs),
        unmatched_gt=m - len(pairs),
        e_matched=e_matched,
        e_penalty=pen * unmatched,
    )


def default_penalty(gt: CutList) -> float:
    """Mean ground-truth shot length: the cost a missing or extra cut
    carries when no explicit penalty is configured."""
    return gt.f_total / (len(gt.cuts) + 1)


def shot_cut_accuracy(
    pred: CutList, gt: CutList, penalty_per_unmatched: float | None = None
) -> ScaReport:
    """Shot Cut Accuracy: exp(-(e_matched + e_penalty) / f_total) in (0, 1].

    Equals 1 exactly iff the predicted cuts match ground truth exactly.
    """
    pen = default_penalty(gt) if penalty_per_unmatched is None else penalty_per_unmatched
    match = match_cuts(pred, gt, pen)
    nsd = (match.e_matched + match.e_penalty) / gt.f_total
    return ScaReport(
        pairs=match.pairs,
        unmatched_pred=match.unmatched_pred,
        unmatched_gt=match.unmatched_gt,
        e_matched=match.e_matched,
        e_penalty=match.e_penalty,
        nsd=nsd,
        sca=math.exp(-nsd),
        f_total=gt.f_total,
        penalty_per_unmatched=pen,
    )


def _cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise LayoutMismatchError(f"vector dims differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteInputError("embedding vectors must be finite")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise NonFiniteInputError("zero-norm embedding vector")
    return float(a @ b / (na * nb))


def inter_shot_consistency(
    shot_vectors: Sequence, groups: Iterable[Sequence[int]]
) -> float:
    """Mean cosine similarity over all within-group shot pairs, pooled
    across groups (shots are grouped by the character they depict)."""
    all_pairs = []
    n_groups = 0
    for group in groups:
        n_groups += 1
        members = list(group)
        if len(members) < 2:
            raise DegenerateGroupError(f"group {members} has fewer than 2 shots")
        for idx in members:
            if not 0 <= idx < len(shot_vectors):
                raise IndexOutOfBoundsError(f"shot index {idx} outside [0, {len(shot_vectors)})")
        all_pairs.extend(combinations(members, 2))
    if n_groups == 0:
        raise EmptyInputError("no character groups given")
    return float(
        np.mean([_cosine(shot_vectors[a], shot_vectors[b]) for a, b in all_pairs])
    )


def intra_shot_consistency(frame_vectors: Sequence) -> float:
    """Within one shot: mean over frames t >= 1 of the average of the
    similarity to the previous frame and to the first frame."""
    if len(frame_vectors) < 2:
        raise TooFewFramesError(f"need >= 2 frames, got {len(frame_vectors)}")
    terms = [
        (_cosine(frame_vectors[t], frame_vectors[t - 1])
         + _cosine(frame_vectors[t], frame_vectors[0])) / 2.0
        for t in range(1, len(frame_vectors))
    ]
    return float(np.mean(terms))


def semantic_consistency(prompt_vector, media_vector) -> float:
    """Cosine similarity between a prompt embedding and a media embedding."""
    return _cosine(prompt_vector, media_vector)


def semantic_consistency_per_shot(prompt_vectors: Sequence, media_vectors: Sequence) -> float:
    """Mean prompt/media cosine over aligned per-shot embedding lists."""
    if len(prompt_vectors) != len(media_vectors):
        raise LayoutMismatchError(
            f"{len(prompt_vectors)} prompt vectors vs {len(media_vectors)} media vectors"
        )
    if not prompt_vectors:
        raise EmptyInputError("no prompt/media pairs")
    return float(
        np.mean([_cosine(p, m) for p, m in zip(prompt_vectors, media_vectors)])
    )


class EmbeddingProvider(ABC):
    """Maps a media segment id to a unit-norm embedding vector.

    ``thread_safe`` declares whether concurrent read-only queries are
    allowed; the CLI queries sequentially when a provider says otherwise.
    """

    dim: int
    thread_safe: bool = True

    @abstractmethod
    def embed(self, segment_id: str) -> np.ndarray:
        raise NotImplementedError


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic pseudo-random unit vectors keyed by segment id.

    Testing stand-in for a real feature extractor: the same id always maps
    to the same vector, distinct ids to (almost surely) distinct ones.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed

    def embed(self, segment_id: str) -> np.ndarray:
        digest = blake2b(
            f"{self.seed}:{segment_id}".encode(), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)


class TableEmbeddingProvider(EmbeddingProvider):
    """Hand-specified id -> vector table."""

    def __init__(self, vectors: Mapping[str, Sequence[float]]):
        if not vectors:
            raise EmptyInputError("empty embedding table")
        table = {}
        dim = None
        for key, value in vectors.items():
            vec = np.asarray(value, dtype=np.float64)
            if vec.ndim != 1:
                raise ValueError(f"embedding {key!r} is not a vector")
            if not np.all(np.isfinite(vec)):
                raise NonFiniteInputError(f"embedding {key!r} contains non-finite values")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise LayoutMismatchError(
                    f"embedding {key!r} has dim {vec.size}, expected {dim}"
                )
            table[key] = vec
        self.dim = int(dim)
        self._table = table

    def embed(self, segment_id: str) -> np.ndarray:
        return self._table[segment_id]

    def ids(self) -> list[str]:
        return list(self._table)


def load_embeddings(path) -> TableEmbeddingProvider:
    """Load an id -> vector JSON mapping, enforcing unit norm.

    Vectors off unit norm by more than 1e-6 are normalized with a warning;
    zero vectors are rejected.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a JSON object of id -> vector")
    vectors = {}
    for key, value in raw.items():
        vec = np.asarray(value, dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError(f"{path}: embedding {key!r} is the zero vector")
        if abs(norm - 1.0) > 1e-6:
            warnings.warn(f"embedding {key!r} has norm {norm:.6g}; normalizing")
            vec = vec / norm
        vectors[key] = vec
    return TableEmbeddingProvider(vectors)


def read_cut_list(path) -> CutList:
    """Read ``{"f_total": int, "cuts": [int, ...]}`` from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return CutList(f_total=int(raw["f_total"]), cuts=tuple(raw["cuts"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed cut-list file: {exc}") from exc


def write_cut_list(cut_list: CutList, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"f_total": cut_list.f_total, "cuts": list(cut_list.cuts)}, fh)
        fh.write("\n")
