"""Shot/frame/token geometry of a multi-shot latent sequence.

Tokens are flattened shot-major, then frame-major, then spatial, so every
shot owns one contiguous half-open range of the flattened sequence.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import (
    EmptyLayoutError,
    IndexOutOfBoundsError,
    InvalidShotSpecError,
    InvalidSummaryIndexError,
)


@dataclass(frozen=True)
class ShotSpec:
    """One shot: latent frame count and spatial tokens per frame."""

    frames: int
    tokens_per_frame: int

    def __post_init__(self) -> None:
        if self.frames < 1 or self.tokens_per_frame < 1:
            raise InvalidShotSpecError(
                f"shot spec needs frames >= 1 and tokens_per_frame >= 1, "
                f"got ({self.frames!r}, {self.tokens_per_frame!r})"
            )

    @property
    def tokens(self) -> int:
        return self.frames * self.tokens_per_frame


@dataclass(frozen=True)
class TokenLayout:
    """Contiguous shot-major flattening of a multi-shot token sequence.

    Shot ``i`` occupies ``ranges[i] = (start, end)`` with ``end`` exclusive;
    the ranges are contiguous, ordered, and exactly cover ``[0, total_tokens)``.
    """

    shots: tuple[ShotSpec, ...]
    ranges: tuple[tuple[int, int], ...] = field(init=False)
    _starts: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        shots = tuple(self.shots)
        if not shots:
            raise EmptyLayoutError("token layout needs at least one shot")
        ranges = []
        start = 0
        for spec in shots:
            ranges.append((start, start + spec.tokens))
            start += spec.tokens
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "ranges", tuple(ranges))
        object.__setattr__(self, "_starts", tuple(r[0] for r in ranges))

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def total_tokens(self) -> int:
        return self.ranges[-1][1]

    def shot_of_token(self, token_index: int) -> int:
        """Index of the shot whose range contains ``token_index``."""
        if not 0 <= token_index < self.total_tokens:
            raise IndexOutOfBoundsError(
                f"token index {token_index} outside [0, {self.total_tokens})"
            )
        return bisect_right(self._starts, token_index) - 1

    def shot_token_indices(self, shot: int) -> range:
        """All token indices of shot ``shot``, in order."""
        if not 0 <= shot < self.n_shots:
            raise IndexOutOfBoundsError(f"shot index {shot} outside [0, {self.n_shots})")
        start, end = self.ranges[shot]
        return range(start, end)


def build_token_layout(shot_specs: Iterable[ShotSpec]) -> TokenLayout:
    """Build the flattened token layout for an ordered list of shots."""
    return TokenLayout(tuple(shot_specs))


class SummaryStrategy:
    """How each shot picks the summary tokens it exposes to other shots."""

    __slots__ = ()


@dataclass(frozen=True)
class FirstFrame(SummaryStrategy):
    """Summary tokens are the shot's first latent frame."""


@dataclass(frozen=True)
class FirstAndLastFrame(SummaryStrategy):
    """Summary tokens are the shot's first and last latent frames."""


@dataclass(frozen=True)
class ExplicitIndices(SummaryStrategy):
    """Caller-chosen summary token indices (global), one list per shot.

    Lets users emulate any selection, including an externally learned one.
    """

    per_shot: tuple[tuple[int, ...], ...]


def summary_token_indices(
    layout: TokenLayout, strategy: SummaryStrategy
) -> tuple[tuple[int, ...], ...]:
    """Per-shot summary token indices (global, sorted ascending).

    For ``FirstFrame`` shot j's list is exactly its first
    ``tokens_per_frame`` indices; ``FirstAndLastFrame`` adds the last
    frame's indices (deduplicated when the shot has a single frame).
    """
    if isinstance(strategy, FirstFrame):
        return tuple(
            tuple(range(start, start + spec.tokens_per_frame))
            for spec, (start, _) in zip(layout.shots, layout.ranges)
        )
    if isinstance(strategy, FirstAndLastFrame):
        out = []
        for spec, (start, _) in zip(layout.shots, layout.ranges):
            first = range(start, start + spec.tokens_per_frame)
            last_start = start + (spec.frames - 1) * spec.tokens_per_frame
            last = range(last_start, last_start + spec.tokens_per_frame)
            out.append(tuple(sorted(set(first) | set(last))))
        return tuple(out)
    if isinstance(strategy, ExplicitIndices):
        return _validated_explicit(layout, strategy.per_shot)
    raise TypeError(f"unknown summary strategy: {strategy!r}")


def _validated_explicit(
    layout: TokenLayout, per_shot: Sequence[Sequence[int]]
) -> tuple[tuple[int, ...], ...]:
    if len(per_shot) != layout.n_shots:
        raise InvalidSummaryIndexError(
            f"expected {layout.n_shots} index lists, got {len(per_shot)}"
        )
    out = []
    for shot, indices in enumerate(per_shot):
        start, end = layout.ranges[shot]
        ordered = tuple(sorted(indices))
        if not ordered:
            raise InvalidSummaryIndexError(f"shot {shot}: summary selection is empty")
        if len(set(ordered)) != len(ordered):
            raise InvalidSummaryIndexError(f"shot {shot}: duplicate summary indices")
        for idx in ordered:
            if not start <= idx < end:
                raise InvalidSummaryIndexError(
                    f"shot {shot}: index {idx} outside its range [{start}, {end})"
                )
        out.append(ordered)
    return tuple(out)
