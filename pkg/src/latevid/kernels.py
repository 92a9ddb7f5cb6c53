"""Corpus-scoring kernel dispatch: compiled extension with numpy fallback.

The compiled module is built at install time; when it is missing (pure
Python install, failed toolchain) the numpy implementation is selected
automatically. Both backends produce identical scores on identical inputs
up to IEEE-754 evaluation-order effects, and the test suite holds them to
1e-9 of the naive reference.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from latevid import _mmskern
except ImportError:  # pragma: no cover - depends on build environment
    _mmskern = None

HAVE_COMPILED = _mmskern is not None

_active = "compiled" if HAVE_COMPILED and os.environ.get("LATEVID_BACKEND") != "numpy" else "numpy"


def available_backends() -> list[str]:
    return ["compiled", "numpy"] if HAVE_COMPILED else ["numpy"]


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in available_backends():
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}")
    _active = name


def _check_packed(feats: np.ndarray, starts: np.ndarray) -> None:
    if starts.ndim != 1 or starts.size < 2:
        raise ValueError("starts must hold at least one segment boundary pair")
    if starts[0] != 0 or starts[-1] != feats.shape[0]:
        raise ValueError(f"starts must span [0, {feats.shape[0]}], got [{starts[0]}, {starts[-1]}]")


def _mms_numpy(q: np.ndarray, feats: np.ndarray, starts: np.ndarray) -> np.ndarray:
    sims = feats @ q.T
    seg_max = np.maximum.reduceat(sims, starts[:-1], axis=0)
    return seg_max.mean(axis=1)


def _sms_numpy(q: np.ndarray, feats: np.ndarray, starts: np.ndarray) -> np.ndarray:
    sims = feats @ q.T
    seg_max = np.maximum.reduceat(sims, starts[:-1], axis=0)
    return seg_max.sum(axis=1)


def _mp_numpy(qv: np.ndarray, feats: np.ndarray, starts: np.ndarray, renormalize: bool) -> np.ndarray:
    sums = np.add.reduceat(feats, starts[:-1], axis=0)
    counts = np.diff(starts).reshape(-1, 1)
    pooled = sums / counts
    scores = pooled @ qv
    if renormalize:
        norms = np.linalg.norm(pooled, axis=1)
        scores = np.divide(scores, norms, out=scores, where=norms > 0)
    return scores


def mms_scores(q: np.ndarray, feats: np.ndarray, starts: np.ndarray, backend: str | None = None) -> np.ndarray:
    """MeanMaxSim of query token bank ``q`` against every packed video."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    _check_packed(feats, starts)
    if q.shape[1] != feats.shape[1]:
        raise ValueError(f"dimension mismatch: query D={q.shape[1]}, corpus D={feats.shape[1]}")
    if (backend or _active) == "compiled":
        out = np.empty(starts.size - 1)
        _mmskern.mms_scores(q, feats, starts, out)
        return out
    return _mms_numpy(q, feats, starts)


def sms_scores(q: np.ndarray, feats: np.ndarray, starts: np.ndarray, backend: str | None = None) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float64)
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    _check_packed(feats, starts)
    if q.shape[1] != feats.shape[1]:
        raise ValueError(f"dimension mismatch: query D={q.shape[1]}, corpus D={feats.shape[1]}")
    if (backend or _active) == "compiled":
        out = np.empty(starts.size - 1)
        _mmskern.sms_scores(q, feats, starts, out)
        return out
    return _sms_numpy(q, feats, starts)


def mp_scores(
    qv: np.ndarray,
    feats: np.ndarray,
    starts: np.ndarray,
    renormalize: bool = False,
    backend: str | None = None,
) -> np.ndarray:
    """Mean-pool score of a single query vector against every packed video."""
    qv = np.ascontiguousarray(qv, dtype=np.float64).reshape(-1)
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    _check_packed(feats, starts)
    if qv.shape[0] != feats.shape[1]:
        raise ValueError(f"dimension mismatch: query D={qv.shape[0]}, corpus D={feats.shape[1]}")
    if (backend or _active) == "compiled":
        out = np.empty(starts.size - 1)
        _mmskern.mp_scores(qv, feats, starts, out, renormalize)
        return out
    return _mp_numpy(qv, feats, starts, renormalize)
