"""Argument-principle counting and recursive localisation of zeros.

The analytic function is only ever seen through a batch evaluator returning
``log F`` (any continuous branch; only differences of neighbouring samples
are used).  Along an edge, ``|dz| / |d log F|`` estimates the distance to
the nearest zero.  When that estimate drops below ``clearance`` times the
rectangle diameter, a zero sits on or next to the contour and the count
would be unreliable.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import NonConvergence, PhaseResolutionExceeded, ZeroOnContour
from .rect import Rect

__all__ = ["PhaseSampler", "winding_number", "locate_zeros", "with_perturbation"]

# fractions tried, in order, when a bisection line runs through a zero
_SPLIT_FRACTIONS = (0.5, 0.5 + 0.0137, 0.5 - 0.0241, 0.5 + 0.0419, 0.5 - 0.0613, 0.5 + 0.0871)


class PhaseSampler:
    """Caching front end for a batch evaluator ``zs -> log F(zs)``."""

    def __init__(self, evaluate: Callable[[np.ndarray], np.ndarray]):
        self._evaluate = evaluate
        self._cache: dict[tuple[float, float], complex] = {}
        self.evaluations = 0

    @staticmethod
    def _key(z: complex) -> tuple[float, float]:
        return (float(np.format_float_scientific(z.real, precision=12)),
                float(np.format_float_scientific(z.imag, precision=12)))

    def __call__(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        keys = [self._key(z) for z in zs]
        todo = [i for i, k in enumerate(keys) if k not in self._cache]
        if todo:
            uniq: dict[tuple[float, float], int] = {}
            for i in todo:
                uniq.setdefault(keys[i], i)
            idx = list(uniq.values())
            vals = np.asarray(self._evaluate(zs[idx]), dtype=complex)
            self.evaluations += len(idx)
            for j, i in enumerate(idx):
                self._cache[keys[i]] = complex(vals[j])
        return np.array([self._cache[k] for k in keys], dtype=complex)


def _wrap(d: np.ndarray) -> np.ndarray:
    return (d + math.pi) % (2 * math.pi) - math.pi


def _edge_increment(sampler: PhaseSampler, z0: complex, z1: complex, min_distance: float,
                    n0: int, max_dphi: float, max_points: int) -> float:
    ts = np.linspace(0.0, 1.0, n0 + 1)
    logf = sampler(z0 + (z1 - z0) * ts)
    length = abs(z1 - z0)
    while True:
        if not np.all(np.isfinite(logf.real)):
            i = int(np.flatnonzero(~np.isfinite(logf.real))[0])
            raise ZeroOnContour(complex(z0 + (z1 - z0) * ts[i]), 0.0)
        dphi = _wrap(np.diff(logf.imag))
        bad = np.flatnonzero(np.abs(dphi) > max_dphi)
        if bad.size == 0:
            dlog = np.hypot(np.diff(logf.real), dphi)
            with np.errstate(divide="ignore"):
                dist = np.diff(ts) * length / dlog
            i = int(np.argmin(dist))
            if dist[i] < min_distance:
                raise ZeroOnContour(complex(z0 + (z1 - z0) * 0.5 * (ts[i] + ts[i + 1])), float(dist[i]))
            return float(np.sum(dphi))
        short = np.flatnonzero(np.diff(ts)[bad] * length < min_distance)
        if short.size:
            i = int(bad[short[0]])
            raise ZeroOnContour(complex(z0 + (z1 - z0) * 0.5 * (ts[i] + ts[i + 1])), float(np.diff(ts)[i] * length))
        if ts.size + bad.size > max_points or np.min(np.diff(ts)[bad]) < 1e-13:
            raise PhaseResolutionExceeded(
                f"phase still jumps by {np.max(np.abs(dphi)):.3f} rad between samples on edge {z0}->{z1}")
        mids = 0.5 * (ts[bad] + ts[bad + 1])
        ts = np.insert(ts, bad + 1, mids)
        logf = np.insert(logf, bad + 1, sampler(z0 + (z1 - z0) * mids))


def winding_number(sampler: PhaseSampler, rect: Rect, *, clearance: float = 1e-3,
                   points_per_edge: int = 32, max_dphi: float = math.pi / 4,
                   max_points: int = 50_000) -> int:
    """Number of zeros inside ``rect`` from the phase winding along its boundary.

    Each edge is sampled on ``points_per_edge`` intervals and bisected where
    consecutive phase increments exceed ``max_dphi``.  ``clearance`` is the
    smallest admissible zero-to-contour distance relative to the diameter.
    """
    c = rect.corners
    total = 0.0
    for z0, z1 in zip(c, c[1:] + c[:1]):
        total += _edge_increment(sampler, z0, z1, clearance * rect.diameter, points_per_edge,
                                 max_dphi, max_points)
    k = total / (2 * math.pi)
    n = round(k)
    if abs(k - n) > 1e-6:
        raise PhaseResolutionExceeded(f"winding sum {k:.6f} is not an integer")
    return int(n)


def locate_zeros(sampler: PhaseSampler, rect: Rect, polish: Callable[[Rect], tuple[complex, float] | None],
                 *, tol: float = 1e-8, clearance: float = 1e-3, count: int | None = None,
                 **winding_kw) -> list[tuple[complex, int, float]]:
    """All zeros in ``rect`` as ``(z, multiplicity, residual)``.

    Boxes are bisected until they hold a single zero, which ``polish``
    refines (returning ``None`` asks for further bisection), or until their
    diameter drops below ``tol``; a tiny box with winding ``m > 1`` yields a
    single entry of multiplicity ``m`` at its centre.
    """
    if count is None:
        count = winding_number(sampler, rect, clearance=clearance, **winding_kw)
    out: list[tuple[complex, int, float]] = []
    stack = [(rect, count)]
    while stack:
        box, m = stack.pop()
        if m == 0:
            continue
        if m < 0:
            raise PhaseResolutionExceeded(f"negative winding {m} in box {box.as_tuple()}")
        if box.diameter < tol:
            z, res = box.center, math.nan
            if m == 1:
                got = polish(box)
                if got is not None:
                    z, res = got
            out.append((z, m, res))
            continue
        if m == 1:
            got = polish(box)
            if got is not None and box.expanded(1e-9 * (1 + abs(box.center))).contains(got[0]):
                out.append((got[0], 1, got[1]))
                continue
        for frac in _SPLIT_FRACTIONS:
            first, second = box.split(frac)
            try:
                m1 = winding_number(sampler, first, clearance=clearance, **winding_kw)
                break
            except ZeroOnContour:
                continue
        else:
            raise NonConvergence(box.as_tuple(), "could not find a zero-free bisection line")
        stack.append((second, m - m1))
        stack.append((first, m1))
    out.sort(key=lambda t: (t[0].real, t[0].imag))
    return out


def with_perturbation(fn: Callable[[Rect], object], rect: Rect, fraction: float = 1e-2):
    """Call ``fn(rect)``; on a zero on the contour retry with slightly resized rectangles.

    Returns ``(result, rect_used)``.
    """
    d = fraction * rect.diameter
    last: Exception | None = None
    for margin in (0.0, d, -d, 2 * d, -2 * d):
        try:
            r = rect.expanded(margin) if margin else rect
        except Exception:  # shrinking a thin rectangle can empty it
            continue
        try:
            return fn(r), r
        except ZeroOnContour as exc:
            last = exc
    assert last is not None
    raise last
