"""Query-video interaction mechanisms.

Five scoring families over L2-normalized token banks:

* ``mp``     - single-vector mean-pool score (query vector vs pooled frames)
* ``sms``    - ColBERT-style sum of per-token MaxSim values
* ``mms_f``  - MeanMaxSim over static frame features
* ``mms_v``  - MeanMaxSim over temporally contextualized video features
                (expansion outputs participate in the max pool)
* ``mms_fv`` - sum of the frame-level and video-level MeanMaxSim scores

Every mechanism exists in two forms: a naive pure-Python triple-loop
reference (``*_ref``) and an optimized form (one matrix product, then a
row max and mean). Interaction is one-directional: query tokens select
visual features, never the reverse, so adding video-side rows can only
raise a MeanMaxSim score. Pad/augmentation query tokens count in the mean
denominator M.

:func:`batch_similarity` lifts the pairwise scores to the in-batch
similarity matrices used for training; it runs on the autodiff tape so
gradients flow back into the encoders.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from typing import Sequence

import numpy as np

from latevid import autodiff as ad
from latevid.autodiff import Tensor

MP = "mp"
SMS = "sms"
MMS_F = "mms_f"
MMS_V = "mms_v"
MMS_FV = "mms_fv"

KINDS = (MP, SMS, MMS_F, MMS_V, MMS_FV)


def _to_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))


def _validate_unit_rows(data: np.ndarray, tol: float, what: str) -> None:
    norms = np.linalg.norm(data, axis=1)
    worst = float(np.abs(norms - 1.0).max())
    if worst > tol:
        raise ValueError(f"{what}: rows must be L2-normalized (max deviation {worst:.3e} > {tol:g})")


@dataclass
class QueryEncoding:
    """Contextualized query token bank: M x D unit rows.

    ``true_length`` counts the non-pad tokens; when soft query augmentation
    is on, M exceeds it and the extra rows are pad-token outputs acting as
    learned search terms.
    """

    tokens: Tensor
    true_length: int
    norm_tol: InitVar[float] = 1e-6

    def __post_init__(self, norm_tol: float):
        self.tokens = _to_tensor(self.tokens)
        m = self.tokens.shape[0]
        if not (1 <= self.true_length <= m):
            raise ValueError(f"true_length {self.true_length} outside [1, {m}]")
        _validate_unit_rows(self.tokens.data, norm_tol, "QueryEncoding")

    @property
    def padded_length(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]


@dataclass
class FrameBank:
    """Static per-frame features: N x D unit rows, N >= 1."""

    frames: Tensor
    norm_tol: InitVar[float] = 1e-6

    def __post_init__(self, norm_tol: float):
        self.frames = _to_tensor(self.frames)
        if self.frames.shape[0] < 1:
            raise ValueError("FrameBank needs at least one frame row")
        _validate_unit_rows(self.frames.data, norm_tol, "FrameBank")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class VideoBank:
    """Temporally contextualized features: (N+E) x D unit rows.

    The last ``expansion_count`` rows are visual-expansion outputs; they sit
    in the same bank because they take part in the MaxSim pool.
    """

    feats: Tensor
    expansion_count: int = 0
    norm_tol: InitVar[float] = 1e-6

    def __post_init__(self, norm_tol: float):
        self.feats = _to_tensor(self.feats)
        if self.expansion_count < 0:
            raise ValueError(f"expansion_count must be >= 0, got {self.expansion_count}")
        if self.feats.shape[0] <= self.expansion_count:
            raise ValueError(
                f"VideoBank with {self.feats.shape[0]} rows cannot hold {self.expansion_count} expansion outputs"
            )
        _validate_unit_rows(self.feats.data, norm_tol, "VideoBank")

    @property
    def dim(self) -> int:
        return self.feats.shape[1]


@dataclass
class SimilarityMatrix:
    """In-batch score matrix (queries x videos) for one interaction kind."""

    scores: Tensor
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown similarity kind {self.kind!r}; expected one of {KINDS}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


# ---------------------------------------------------------------------------
# naive references (pure Python loops; the oracle side of the kernel checks)
# ---------------------------------------------------------------------------


def _dot(a, b) -> float:
    acc = 0.0
    for x, y in zip(a, b):
        acc += x * y
    return acc


def mp_score_ref(q, bank_rows) -> float:
    q = list(np.asarray(q, dtype=np.float64).reshape(-1))
    rows = np.asarray(bank_rows, dtype=np.float64).tolist()
    n = len(rows)
    pooled = [sum(row[k] for row in rows) / n for k in range(len(rows[0]))]
    return _dot(q, pooled)


def sms_score_ref(q_rows, bank_rows) -> float:
    q_rows = np.asarray(q_rows, dtype=np.float64).tolist()
    bank_rows = np.asarray(bank_rows, dtype=np.float64).tolist()
    total = 0.0
    for qr in q_rows:
        best = -float("inf")
        for br in bank_rows:
            d = _dot(qr, br)
            if d > best:
                best = d
        total += best
    return total


def mms_score_ref(q_rows, bank_rows) -> float:
    q_rows = np.asarray(q_rows, dtype=np.float64).tolist()
    return sms_score_ref(q_rows, bank_rows) / len(q_rows)


def mms_fv_score_ref(q_rows, frame_rows, video_rows) -> float:
    return mms_score_ref(q_rows, frame_rows) + mms_score_ref(q_rows, video_rows)


# ---------------------------------------------------------------------------
# optimized pairwise scores (single matrix product per bank)
# ---------------------------------------------------------------------------


def _check_dims(d_q: int, d_b: int, op: str) -> None:
    if d_q != d_b:
        raise ValueError(f"{op}: dimension mismatch, query D={d_q} vs bank D={d_b}")


def _mms(q: np.ndarray, bank: np.ndarray) -> float:
    return float((q @ bank.T).max(axis=1).mean())


def mp_score(q, fb: FrameBank, renormalize: bool = False) -> float:
    """Dot of the query vector with the mean of the frame rows.

    The pooled vector is deliberately NOT re-normalized; pass
    ``renormalize=True`` for the cosine-style variant.
    """
    qv = np.asarray(q, dtype=np.float64).reshape(-1)
    _check_dims(qv.shape[0], fb.dim, "mp_score")
    pooled = fb.frames.data.mean(axis=0)
    if renormalize:
        norm = np.linalg.norm(pooled)
        if norm > 0:
            pooled = pooled / norm
    return float(qv @ pooled)


def sms_score(qe: QueryEncoding, fb: FrameBank) -> float:
    """Sum over all M interaction tokens of the max frame similarity."""
    _check_dims(qe.dim, fb.dim, "sms_score")
    return float((qe.tokens.data @ fb.frames.data.T).max(axis=1).sum())


def mms_f(qe: QueryEncoding, fb: FrameBank) -> float:
    """Frame-level MeanMaxSim; M counts every interaction token, pads included."""
    _check_dims(qe.dim, fb.dim, "mms_f")
    return _mms(qe.tokens.data, fb.frames.data)


def mms_v(qe: QueryEncoding, vb: VideoBank) -> float:
    """Video-level MeanMaxSim; the max runs over all N+E rows."""
    _check_dims(qe.dim, vb.dim, "mms_v")
    return _mms(qe.tokens.data, vb.feats.data)


def mms_fv(qe: QueryEncoding, fb: FrameBank, vb: VideoBank) -> float:
    """Final relevance score: exact sum of the frame- and video-level scores."""
    return mms_f(qe, fb) + mms_v(qe, vb)


# ---------------------------------------------------------------------------
# batched similarity matrices (autodiff path for training)
# ---------------------------------------------------------------------------


def _pair_mms(q_tokens: Tensor, bank: Tensor) -> Tensor:
    sims = ad.matmul(q_tokens, ad.transpose(bank))
    maxes, _ = ad.max_rows(sims)
    return ad.mean_all(maxes)


def _pair_sms(q_tokens: Tensor, bank: Tensor) -> Tensor:
    sims = ad.matmul(q_tokens, ad.transpose(bank))
    maxes, _ = ad.max_rows(sims)
    return ad.sum_all(maxes)


def _pair_mp(q_tokens: Tensor, true_length: int, bank: Tensor) -> Tensor:
    q_agg = ad.slice_rows(q_tokens, true_length - 1, true_length)
    pooled = ad.mean_rows(bank)
    return ad.matmul(q_agg, ad.transpose(pooled))


def batch_similarity(
    queries: Sequence[QueryEncoding],
    videos: Sequence[tuple[FrameBank, VideoBank]],
    kind: str,
) -> SimilarityMatrix:
    """Score every query against every video; entry (i, j) = pairwise score.

    Gradients flow whenever the underlying token banks are tracked. For the
    ``mp`` kind the query vector is the output of the last true token (the
    end-of-text position).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown similarity kind {kind!r}; expected one of {KINDS}")
    if not queries or not videos:
        raise ValueError("batch_similarity: empty query or video batch")
    dim = queries[0].dim
    for qe in queries:
        if qe.dim != dim:
            raise ValueError(f"batch_similarity: mixed query dims {qe.dim} != {dim}")
    for fb, vb in videos:
        if fb.dim != dim or vb.dim != dim:
            raise ValueError(f"batch_similarity: video dim {fb.dim}/{vb.dim} != query dim {dim}")

    grid: list[list[Tensor]] = []
    for qe in queries:
        row: list[Tensor] = []
        for fb, vb in videos:
            if kind == MMS_F:
                cell = _pair_mms(qe.tokens, fb.frames)
            elif kind == MMS_V:
                cell = _pair_mms(qe.tokens, vb.feats)
            elif kind == MMS_FV:
                cell = ad.add(_pair_mms(qe.tokens, fb.frames), _pair_mms(qe.tokens, vb.feats))
            elif kind == SMS:
                cell = _pair_sms(qe.tokens, fb.frames)
            else:
                cell = _pair_mp(qe.tokens, qe.true_length, fb.frames)
            row.append(cell)
        grid.append(row)
    return SimilarityMatrix(scores=ad.stack2d(grid), kind=kind)
