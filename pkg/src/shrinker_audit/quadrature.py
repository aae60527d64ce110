"""Piecewise composite Simpson quadrature on break-aligned grids.

The trapezoid cutoff used by the audits is piecewise polynomial with kinks
at s = 1 and s = s_bar - 1. Integrating it with a quadrature whose nodes
straddle a kink would degrade the order, so paths meant for auditing are
sampled on grids that contain every kink as a node and are uniform between
consecutive breakpoints. Simpson's rule is exact for cubics, which makes the
cutoff factors integrate exactly piece by piece.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CutoffUndefinedError


def simpson_uniform(s: np.ndarray, y: np.ndarray) -> float:
    """Composite Simpson on a uniform grid; 3/8 tail for odd interval counts."""
    n = len(s) - 1
    if n < 1:
        return 0.0
    h = (s[-1] - s[0]) / n
    steps = np.diff(s)
    if not np.allclose(steps, h, rtol=1e-8, atol=1e-12 * (1.0 + abs(h))):
        raise ValueError("simpson_uniform requires a uniform grid")
    if n == 1:
        return float(0.5 * h * (y[0] + y[1]))
    if n % 2 == 0:
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return float(h / 3.0 * np.dot(w, y))
    if n == 3:
        return float(3.0 * h / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]))
    head = simpson_uniform(s[: n - 2], y[: n - 2])
    tail = float(3.0 * h / 8.0 * (y[n - 3] + 3.0 * y[n - 2] + 3.0 * y[n - 1] + y[n]))
    return head + tail


def piece_slices(s: np.ndarray, breaks) -> list:
    """Index ranges [(i0, i1), ...] of the grid pieces between breakpoints.

    Every breakpoint must coincide with a grid node. An empty ``breaks``
    means the whole grid is one piece.
    """
    s = np.asarray(s, dtype=float)
    if breaks is None or len(breaks) == 0:
        return [(0, len(s) - 1)]
    idx = []
    for b in breaks:
        j = int(np.argmin(np.abs(s - b)))
        if abs(s[j] - b) > 1e-9 * (1.0 + abs(b)):
            raise ValueError(f"breakpoint {b} is not a grid node")
        idx.append(j)
    idx = sorted(set(idx) | {0, len(s) - 1})
    return [(idx[i], idx[i + 1]) for i in range(len(idx) - 1)]


def integrate(s: np.ndarray, y: np.ndarray, breaks=()) -> float:
    """Piecewise composite Simpson over break-aligned uniform pieces."""
    total = 0.0
    for i0, i1 in piece_slices(s, breaks):
        total += simpson_uniform(s[i0 : i1 + 1], y[i0 : i1 + 1])
    return total


def integrate_with_error(s: np.ndarray, y: np.ndarray, breaks=()):
    """Integral plus a conservative Richardson error estimate.

    The estimate compares the full grid against its 2x coarsening whenever
    every piece has an even interval count; otherwise it falls back to the
    (much cruder) Simpson-versus-trapezoid difference.
    """
    slices = piece_slices(s, breaks)
    fine = 0.0
    coarse = 0.0
    coarsenable = all((i1 - i0) % 2 == 0 and i1 - i0 >= 2 for i0, i1 in slices)
    for i0, i1 in slices:
        fine += simpson_uniform(s[i0 : i1 + 1], y[i0 : i1 + 1])
        if coarsenable:
            coarse += simpson_uniform(s[i0 : i1 + 1 : 2], y[i0 : i1 + 1 : 2])
        else:
            coarse += float(np.trapezoid(y[i0 : i1 + 1], s[i0 : i1 + 1]))
    return fine, abs(fine - coarse)


def uniform_grid(s_bar: float, n_intervals: int) -> np.ndarray:
    if n_intervals < 2:
        raise ValueError("need at least 2 intervals")
    return np.linspace(0.0, s_bar, n_intervals + 1)


def audit_grid(s_bar: float, density: int = 16, extra_breaks=()):
    """Grid over [0, s_bar] aligned to the cutoff kinks at 1 and s_bar - 1.

    Returns ``(s, breaks)``. Each piece between consecutive breakpoints is
    uniform with an interval count that is a multiple of 4, so the grid can
    be coarsened once for Richardson error estimates. Extra breakpoints
    (e.g. a scan-window edge) may be inserted anywhere in (0, s_bar).
    """
    if s_bar < 2.0:
        raise CutoffUndefinedError(
            f"trapezoid cutoff needs s_bar >= 2 (got {s_bar:.6g})"
        )
    breaks = {0.0, 1.0, s_bar - 1.0, s_bar}
    for b in extra_breaks:
        if not 0.0 < b < s_bar:
            raise ValueError(f"extra breakpoint {b} outside (0, {s_bar})")
        breaks.add(float(b))
    breaks = sorted(breaks)
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        length = b - a
        if length < 1e-12:
            continue
        count = max(4, 4 * math.ceil(length * density / 4.0))
        pieces.append(np.linspace(a, b, count + 1))
    s = np.concatenate([p if i == 0 else p[1:] for i, p in enumerate(pieces)])
    return s, tuple(breaks)
