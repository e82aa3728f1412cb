"""Composite Gauss-Legendre rules on momentum panels."""

from __future__ import annotations

import numpy as np

ORDER = 8


def panel_rule(edges: np.ndarray, order: int = ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of an ``order``-point rule on each panel of ``edges``."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def refine_edges(edges: np.ndarray, max_width: float) -> np.ndarray:
    """Split every panel of ``edges`` into equal pieces no wider than ``max_width``."""
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    pieces = np.maximum(1, np.ceil(widths / max_width).astype(int))
    if np.all(pieces == 1):
        return edges
    out = [edges[:1]]
    for lo, w, k in zip(edges[:-1], widths, pieces):
        out.append(lo + w * np.arange(1, k + 1) / k)
    out = np.concatenate(out)
    out[-1] = edges[-1]
    return out


def phase_sum(weights: np.ndarray, phase_rate: np.ndarray, T, chunk: int = 2**21) -> np.ndarray:
    """``sum_j weights_j exp(-i phase_rate_j T)`` for each entry of ``T``."""
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if T_arr.size > 64 and _is_uniform(T_arr):
        return _phase_sum_uniform(weights, phase_rate, T_arr)
    out = np.empty(T_arr.shape, dtype=complex)
    step = max(1, chunk // max(1, weights.size))
    for start in range(0, T_arr.size, step):
        t = T_arr[start:start + step]
        out[start:start + step] = np.exp(-1j * np.outer(t, phase_rate)) @ weights
    return out


def oscillatory_sum(weights: np.ndarray, phase_rate: np.ndarray, T):
    """``|sum_j weights_j exp(-i phase_rate_j T)|^2`` for scalar or array ``T``."""
    out = np.abs(phase_sum(weights, phase_rate, T)) ** 2
    return float(out[0]) if np.ndim(T) == 0 else out


def _is_uniform(T: np.ndarray) -> bool:
    d = np.diff(T)
    return bool(d[0] > 0 and np.ptp(d) <= 1e-12 * max(abs(T[-1]), d[0]))


def _phase_sum_uniform(weights, phase_rate, T, reseed: int = 128):
    # advance the phases by complex multiplication; exact exponentials every `reseed` steps
    h = (T[-1] - T[0]) / (T.size - 1)
    step = np.exp(-1j * phase_rate * h)
    out = np.empty(T.shape, dtype=complex)
    for i in range(T.size):
        if i % reseed == 0:
            z = weights * np.exp(-1j * phase_rate * (T[0] + i * h))
        else:
            z *= step
        out[i] = z.sum()
    return out
