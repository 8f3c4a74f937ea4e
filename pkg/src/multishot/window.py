"""Windowed cross-attention between video tokens and a hierarchical prompt.

Each shot's video tokens attend only to the global prompt tokens plus that
shot's own per-shot prompt tokens. Shot-cut delimiter tokens exist only in
the serialized text and are excluded from every attention window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import _as_matrix, _attend
from .errors import EmptyAttentionRowError, LayoutMismatchError, ShapeMismatchError
from .layout import TokenLayout

Span = tuple[int, int]


@dataclass(frozen=True)
class PromptLayout:
    """Token spans of the concatenated text sequence.

    Serialization order is the global prompt first, then per-shot prompts in
    shot order, with optional delimiter spans between them. Spans are
    half-open, pairwise disjoint, and together cover ``[0, text_tokens)``.
    """

    global_range: Span
    shot_ranges: tuple[Span, ...]
    delimiter_ranges: tuple[Span, ...] = ()
    text_tokens: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "shot_ranges", tuple(self.shot_ranges))
        object.__setattr__(self, "delimiter_ranges", tuple(self.delimiter_ranges))
        spans = [self.global_range, *self.shot_ranges, *self.delimiter_ranges]
        for start, end in spans:
            if start < 0 or end < start:
                raise LayoutMismatchError(f"bad prompt span ({start}, {end})")
        cursor = 0
        for start, end in sorted(s for s in spans if s[0] < s[1]):
            if start != cursor:
                raise LayoutMismatchError(
                    f"prompt spans must tile the text sequence; gap or overlap at {cursor}"
                )
            cursor = end
        object.__setattr__(self, "text_tokens", cursor)

    @property
    def n_shots(self) -> int:
        return len(self.shot_ranges)


def prompt_layout_from_counts(
    global_tokens: int,
    shot_tokens: "list[int] | tuple[int, ...]",
    delimiter_tokens: int = 0,
) -> PromptLayout:
    """PromptLayout for the standard serialization: global prompt, then
    per-shot prompts with a fixed-width delimiter between consecutive shots."""
    cursor = global_tokens
    shots: list[Span] = []
    delims: list[Span] = []
    for i, n in enumerate(shot_tokens):
        if i > 0 and delimiter_tokens > 0:
            delims.append((cursor, cursor + delimiter_tokens))
            cursor += delimiter_tokens
        shots.append((cursor, cursor + n))
        cursor += n
    return PromptLayout((0, global_tokens), tuple(shots), tuple(delims))


def build_cross_mask(video: TokenLayout, prompt: PromptLayout) -> np.ndarray:
    """Boolean mask over (video token, text token): allowed iff the text
    token is in the global prompt or in the video token's own shot prompt."""
    if prompt.n_shots != video.n_shots:
        raise LayoutMismatchError(
            f"prompt has {prompt.n_shots} shot ranges, video layout has {video.n_shots} shots"
        )
    mask = np.zeros((video.total_tokens, prompt.text_tokens), dtype=bool)
    gs, ge = prompt.global_range
    mask[:, gs:ge] = True
    for (vs, ve), (ss, se) in zip(video.ranges, prompt.shot_ranges):
        mask[vs:ve, ss:se] = True
    return mask


def _window_columns(prompt: PromptLayout, shot: int) -> np.ndarray:
    gs, ge = prompt.global_range
    ss, se = prompt.shot_ranges[shot]
    return np.concatenate([np.arange(gs, ge), np.arange(ss, se)])


def window_cross_attention(
    q_vid, k_txt, v_txt, video: TokenLayout, prompt: PromptLayout
) -> np.ndarray:
    """Cross-attention computed blockwise per shot.

    Equivalent to masked dense attention under ``build_cross_mask`` with
    scale ``1/sqrt(d)``, but each shot's queries only ever touch the global
    and own-shot text rows, so per-shot blocks are independent.
    """
    if prompt.n_shots != video.n_shots:
        raise LayoutMismatchError(
            f"prompt has {prompt.n_shots} shot ranges, video layout has {video.n_shots} shots"
        )
    q = _as_matrix(q_vid, "Q_vid")
    k = _as_matrix(k_txt, "K_txt")
    v = _as_matrix(v_txt, "V_txt")
    if q.shape[0] != video.total_tokens:
        raise LayoutMismatchError(
            f"Q_vid has {q.shape[0]} rows, video layout has {video.total_tokens} tokens"
        )
    if k.shape[0] != prompt.text_tokens or v.shape[0] != prompt.text_tokens:
        raise LayoutMismatchError(
            f"K/V rows ({k.shape[0]}, {v.shape[0]}) != prompt text length {prompt.text_tokens}"
        )
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"Q cols {q.shape[1]} != K cols {k.shape[1]}")

    scale = 1.0 / math.sqrt(q.shape[1])
    out = np.empty((q.shape[0], v.shape[1]), dtype=np.result_type(q, k, v))
    for shot, (vs, ve) in enumerate(video.ranges):
        cols = _window_columns(prompt, shot)
        if cols.size == 0:
            raise EmptyAttentionRowError(
                f"shot {shot} has neither global nor own-shot text tokens"
            )
        out[vs:ve] = _attend(q[vs:ve], k[cols], v[cols], scale)
    return out
