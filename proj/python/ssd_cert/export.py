"""Helpers for exporters that turn dense SAE pre-activations into SSDA dumps."""

from __future__ import annotations

import numpy as np

from .formats import SsdaDump, top_entries


def dump_from_dense(
    preacts: np.ndarray,
    tokens: np.ndarray,
    position_loss_m: np.ndarray,
    position_loss_proxy: np.ndarray,
    *,
    d: int,
    V: int,
    J: int,
    alpha: float = 0.5,
    flags: int = 3,
) -> SsdaDump:
    """Builds a dump from (N, T, m) pre-activations and per-position losses in bits.

    Sequence losses are the mean of the position losses, accumulated in double.
    """
    preacts = np.asarray(preacts, dtype=np.float32)
    N, T, m = preacts.shape
    index = np.empty((N, T, J), dtype=np.uint32)
    value = np.empty((N, T, J), dtype=np.float32)
    for n in range(N):
        for t in range(T):
            index[n, t], value[n, t] = top_entries(preacts[n, t], J)
    pm = np.asarray(position_loss_m, dtype=np.float32)
    pp = np.asarray(position_loss_proxy, dtype=np.float32)
    return SsdaDump(
        d=d, m=m, V=V, flags=flags, alpha=alpha,
        tokens=np.asarray(tokens, dtype=np.uint32), index=index, value=value,
        position_loss_m=pm, position_loss_proxy=pp,
        loss_m=pm.astype(np.float64).mean(axis=1).astype(np.float32),
        loss_proxy=pp.astype(np.float64).mean(axis=1).astype(np.float32),
    )


def loss_range(V: int, alpha: float) -> tuple[float, float]:
    """[B - Delta, B] in bits for the smoothed loss."""
    upper = float(np.log2(V / alpha))
    lower = float(-np.log2((1 - alpha) + alpha / V))
    return lower, upper
