"""Desk-scale dataset curation: cut detection, filtering, sample assembly,
and the hierarchical shot-cut prompt format.

The cut detector is a luminance-difference stand-in for an external shot
boundary model; filtering and assembly mirror how contiguous source shots
are grouped into fixed-duration training samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DelimiterCollisionError,
    EmptyInputError,
    MalformedPromptError,
    NonFiniteInputError,
)
from .metrics import CutList

SHOT_CUT_TAG = "[shot cut]"
SHOT_CUT_DELIMITER = f" {SHOT_CUT_TAG} "

DEFAULT_DURATION_TIERS_S = (5.0, 15.0, 60.0)
DEFAULT_TOLERANCE_FRACTION = 0.2
DEFAULT_MAX_SHOTS = 13


@dataclass(frozen=True)
class SourceShot:
    """One detected shot of a source video, with filter annotations."""

    id: str
    source_id: str
    start_frame: int
    end_frame: int  # exclusive
    fps: float
    mean_luminance: float
    aesthetic_score: float | None = None
    caption: str | None = None

    def __post_init__(self) -> None:
        if self.end_frame <= self.start_frame:
            raise ValueError(
                f"shot {self.id}: end_frame {self.end_frame} <= start_frame {self.start_frame}"
            )
        if not self.fps > 0:
            raise ValueError(f"shot {self.id}: fps must be > 0, got {self.fps}")
        if not 0.0 <= self.mean_luminance <= 1.0:
            raise ValueError(
                f"shot {self.id}: mean_luminance must be in [0, 1], got {self.mean_luminance}"
            )

    @property
    def duration_seconds(self) -> float:
        return (self.end_frame - self.start_frame) / self.fps


class RejectReason(Enum):
    TOO_SHORT = "too_short"
    TOO_DARK = "too_dark"
    LOW_AESTHETIC = "low_aesthetic"


@dataclass(frozen=True)
class FilterPolicy:
    """Keep thresholds; a shot must clear all three to survive."""

    min_duration_s: float = 1.0
    min_luminance: float = 0.05
    min_aesthetic: float = 4.5


@dataclass(frozen=True)
class HierarchicalPrompt:
    """A global scene description plus ordered per-shot descriptions."""

    global_text: str
    per_shot: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_shot", tuple(self.per_shot))
        if not self.per_shot:
            raise ValueError("a hierarchical prompt needs at least one shot text")
        if "\n" in self.global_text:
            raise ValueError("global text must not contain newlines (serialization separator)")
        for text in self.per_shot:
            if not text:
                raise ValueError("per-shot texts must be non-empty")
        for text in (self.global_text, *self.per_shot):
            if SHOT_CUT_TAG in text:
                raise DelimiterCollisionError(
                    f"prompt field contains the reserved tag {SHOT_CUT_TAG!r}: {text!r}"
                )


@dataclass(frozen=True)
class CurationSample:
    """A contiguous group of source shots assembled to one duration tier."""

    shots: tuple[SourceShot, ...]
    tier_s: float
    prompt: HierarchicalPrompt | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "shots", tuple(self.shots))
        if not self.shots:
            raise ValueError("a sample needs at least one shot")
        for prev, cur in zip(self.shots, self.shots[1:]):
            if cur.source_id != prev.source_id or cur.start_frame != prev.end_frame:
                raise ValueError(
                    f"shots {prev.id} -> {cur.id} are not contiguous in one source"
                )

    @property
    def total_duration_s(self) -> float:
        return sum(shot.duration_seconds for shot in self.shots)

    @property
    def sample_id(self) -> str:
        first, last = self.shots[0], self.shots[-1]
        return f"{first.source_id}:{first.start_frame}-{last.end_frame}:{self.tier_s:g}s"


def detect_cuts(frame_signal, threshold: float) -> CutList:
    """Threshold stand-in detector: a cut at every frame whose per-frame
    signal (e.g. mean luminance) jumps by more than ``threshold``."""
    signal = np.asarray(frame_signal, dtype=np.float64).ravel()
    if signal.size == 0:
        raise EmptyInputError("empty frame signal")
    if not np.all(np.isfinite(signal)):
        raise NonFiniteInputError("frame signal contains non-finite values")
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    jumps = np.flatnonzero(np.abs(np.diff(signal)) > threshold) + 1
    return CutList(f_total=int(signal.size), cuts=tuple(int(t) for t in jumps))


def read_frame_signal(path) -> np.ndarray:
    """Per-frame signal file: either a JSON list or one real per line."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        values = json.loads(stripped)
    else:
        values = [float(line) for line in text.splitlines() if line.strip()]
    return np.asarray(values, dtype=np.float64)


def filter_shots(
    shots: Iterable[SourceShot], policy: FilterPolicy
) -> tuple[list[SourceShot], list[tuple[SourceShot, RejectReason]]]:
    """Split shots into kept and rejected; rejects carry the first failed
    rule (duration, then luminance, then aesthetic). A missing aesthetic
    score passes the aesthetic rule."""
    kept: list[SourceShot] = []
    rejected: list[tuple[SourceShot, RejectReason]] = []
    for shot in shots:
        if shot.duration_seconds < policy.min_duration_s:
            rejected.append((shot, RejectReason.TOO_SHORT))
        elif shot.mean_luminance < policy.min_luminance:
            rejected.append((shot, RejectReason.TOO_DARK))
        elif shot.aesthetic_score is not None and shot.aesthetic_score < policy.min_aesthetic:
            rejected.append((shot, RejectReason.LOW_AESTHETIC))
        else:
            kept.append(shot)
    return kept, rejected


def assemble_samples(
    shots: Sequence[SourceShot],
    target_s: float,
    tol_s: float,
    max_shots: int = DEFAULT_MAX_SHOTS,
) -> list[CurationSample]:
    """Greedy left-to-right aggregation of contiguous shots to a duration tier.

    A group closes as soon as its total reaches ``target_s - tol_s`` and is
    emitted iff the total is also <= ``target_s + tol_s`` and the group has
    at most ``max_shots`` shots; otherwise it is discarded. A source change
    or frame discontinuity also closes the group (such groups are still
    below the lower bound, hence discarded), as does the end of the stream.
    """
    if not target_s > tol_s:
        raise ValueError(f"target_s ({target_s}) must exceed tol_s ({tol_s})")
    if tol_s < 0:
        raise ValueError(f"tol_s must be >= 0, got {tol_s}")
    if max_shots < 1:
        raise ValueError(f"max_shots must be >= 1, got {max_shots}")

    samples: list[CurationSample] = []
    group: list[SourceShot] = []
    total = 0.0

    def close() -> None:
        nonlocal group, total
        if group and target_s - tol_s <= total <= target_s + tol_s and len(group) <= max_shots:
            samples.append(CurationSample(shots=tuple(group), tier_s=target_s))
        group = []
        total = 0.0

    for shot in shots:
        if group and (
            shot.source_id != group[-1].source_id
            or shot.start_frame != group[-1].end_frame
        ):
            close()
        group.append(shot)
        total += shot.duration_seconds
        if total >= target_s - tol_s:
            close()
    close()
    return samples


def render_hierarchical_prompt(prompt: HierarchicalPrompt) -> str:
    """Serialize: global text, newline, per-shot texts joined by the
    shot-cut delimiter."""
    for text in (prompt.global_text, *prompt.per_shot):
        if SHOT_CUT_TAG in text:
            raise DelimiterCollisionError(
                f"prompt field contains the reserved tag {SHOT_CUT_TAG!r}"
            )
    return prompt.global_text + "\n" + SHOT_CUT_DELIMITER.join(prompt.per_shot)


def parse_hierarchical_prompt(text: str) -> HierarchicalPrompt:
    """Inverse of render: shot count equals delimiter count plus one."""
    if "\n" not in text:
        raise MalformedPromptError("no newline separating global text from shot section")
    global_text, _, shot_section = text.partition("\n")
    segments = shot_section.split(SHOT_CUT_DELIMITER)
    if any(seg == "" for seg in segments):
        raise MalformedPromptError("empty shot segment in prompt text")
    return HierarchicalPrompt(global_text=global_text, per_shot=tuple(segments))


def shot_record(shot: SourceShot) -> dict:
    record = {
        "id": shot.id,
        "source_id": shot.source_id,
        "start_frame": shot.start_frame,
        "end_frame": shot.end_frame,
        "fps": shot.fps,
        "mean_luminance": shot.mean_luminance,
    }
    if shot.aesthetic_score is not None:
        record["aesthetic_score"] = shot.aesthetic_score
    if shot.caption is not None:
        record["caption"] = shot.caption
    return record


def shot_from_record(record: dict) -> SourceShot:
    return SourceShot(
        id=str(record["id"]),
        source_id=str(record["source_id"]),
        start_frame=int(record["start_frame"]),
        end_frame=int(record["end_frame"]),
        fps=float(record["fps"]),
        mean_luminance=float(record["mean_luminance"]),
        aesthetic_score=(
            float(record["aesthetic_score"]) if record.get("aesthetic_score") is not None else None
        ),
        caption=record.get("caption"),
    )


def read_shot_manifest(path) -> list[SourceShot]:
    """Read a line-delimited JSON shot manifest."""
    shots = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                shots.append(shot_from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed shot record: {exc}") from exc
    return shots


def write_shot_manifest(shots: Iterable[SourceShot], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for shot in shots:
            fh.write(json.dumps(shot_record(shot)) + "\n")


def sample_record(sample: CurationSample) -> dict:
    record = {
        "sample_id": sample.sample_id,
        "tier_s": sample.tier_s,
        "total_duration_s": sample.total_duration_s,
        "shot_ids": [shot.id for shot in sample.shots],
    }
    if sample.prompt is not None:
        record["prompt_text"] = render_hierarchical_prompt(sample.prompt)
    return record


def write_samples(samples: Iterable[CurationSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_record(sample)) + "\n")
