"""Spectra of separable multi-dimensional problems from one-dimensional solves.

Cubes with a sum-separable potential give ordered sums of one-dimensional
eigenvalues.  Radial potentials on balls or annuli split into one radial
problem per angular index ``l``, each contributing with the dimension of its
angular eigenspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameter, LMaxExceeded, WindowNotCovered
from .io import atomic_write_text, format_float
from .potentials import PotentialSpec
from .rect import Rect
from .shooting import BoundaryCondition, EigenRecord, find_eigenvalues, truncate

__all__ = ["Geometry", "ModeTable", "assemble_cube", "radial_modes", "cube_modes", "degeneracy",
           "merge"]

MERGE_TOL = 1e-9


@dataclass(frozen=True)
class Geometry:
    """``cube`` (``(-s, s)^d``), ``ball3d`` (``|x| < s``) or ``annulus2d`` (``r_in < |x| < s``)."""

    kind: str
    s: float
    d: int = 3
    r_in: float | None = None

    def __post_init__(self):
        if self.kind not in ("cube", "ball3d", "annulus2d"):
            raise InvalidParameter(f"unknown geometry {self.kind!r}")
        if self.kind == "annulus2d" and not (self.r_in is not None and 0 < self.r_in < self.s):
            raise InvalidParameter("annulus2d needs 0 < r_in < s")

    def angular_multiplicity(self, l: int) -> int:
        if self.kind == "ball3d":
            return 2 * l + 1
        if self.kind == "annulus2d":
            return 1 if l == 0 else 2
        return 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "s": self.s, "d": self.d, "r_in": self.r_in}


def degeneracy(k: int) -> int:
    """Multiplicity ``k(k+1)/2`` of the ``k``-th level of the 3-D harmonic oscillator."""
    if k < 1:
        raise InvalidParameter("k must be at least 1")
    return k * (k + 1) // 2


def merge(values: Iterable[tuple[complex, int]], tol: float = MERGE_TOL) -> list[tuple[complex, int]]:
    """Cluster values closer than ``tol`` (transitively), summing multiplicities."""
    items = sorted(((complex(z), int(m)) for z, m in values), key=lambda t: (t[0].real, t[0].imag))
    clusters: list[list[tuple[complex, int]]] = []
    for z, m in items:
        for c in clusters:
            if any(abs(z - w) <= tol * max(1.0, abs(w)) for w, _ in c):
                c.append((z, m))
                break
        else:
            clusters.append([(z, m)])
    out = []
    for c in clusters:
        total = sum(m for _, m in c)
        centre = sum(z * m for z, m in c) / total
        out.append((complex(centre), total))
    out.sort(key=lambda t: (t[0].real, t[0].imag))
    return out


def _as_pairs(mu) -> list[tuple[complex, int]]:
    out = []
    for item in mu:
        if isinstance(item, EigenRecord):
            out.append((item.lam, item.multiplicity))
        elif isinstance(item, tuple):
            out.append((complex(item[0]), int(item[1])))
        else:
            out.append((complex(item), 1))
    return out


def assemble_cube(mu, d: int, window: Rect, *, complete_to: float | None = None,
                  tol: float = MERGE_TOL) -> list[tuple[complex, int]]:
    """All ``d``-fold ordered sums of ``mu`` inside ``window``, merged with multiplicities.

    ``mu`` must contain every one-dimensional eigenvalue with real part up to
    ``complete_to`` (default: the largest real part present).  Sums in the
    window can only be certified complete when
    ``complete_to >= window.re_hi - (d - 1) * min Re mu``.
    """
    if d < 1:
        raise InvalidParameter("d must be positive")
    pairs = _as_pairs(mu)
    if not pairs:
        raise WindowNotCovered("empty one-dimensional eigenvalue list")
    pairs.sort(key=lambda t: (t[0].real, t[0].imag))
    re_min = pairs[0][0].real
    known = max(z.real for z, _ in pairs) if complete_to is None else float(complete_to)
    needed = window.re_hi - (d - 1) * re_min
    if known < needed:
        raise WindowNotCovered(
            f"one-dimensional list complete only to Re {known:.6g}; window needs {needed:.6g}")
    sums: list[tuple[complex, int]] = []

    def rec(depth: int, acc: complex, mult: int):
        if depth == d:
            if window.contains(acc):
                sums.append((acc, mult))
            return
        remaining = d - depth - 1
        for z, m in pairs:
            if acc.real + z.real + remaining * re_min > window.re_hi + tol:
                break
            rec(depth + 1, acc + z, mult * m)

    rec(0, 0j, 1)
    return merge(sums, tol)


@dataclass
class ModeTable:
    geometry: Geometry
    window: Rect
    modes: dict = field(default_factory=dict)
    l_max: int | None = None
    meta: dict = field(default_factory=dict)

    def multiplicity(self, l: int) -> int:
        return self.geometry.angular_multiplicity(l)

    def assembled(self, tol: float = 1e-6) -> list[tuple[complex, int]]:
        """Union over ``l`` with angular multiplicities, merged within ``tol``."""
        if self.geometry.kind == "cube":
            return assemble_cube(self.modes[0], self.geometry.d, self.window,
                                 complete_to=self.meta.get("complete_to"), tol=tol)
        vals = [(r.lam, r.multiplicity * self.multiplicity(l)) for l, recs in self.modes.items() for r in recs]
        return merge(vals, tol)

    def to_csv(self) -> str:
        """One row per (l, eigenvalue): ``l,re,im``."""
        rows = ["l,re,im"]
        for l in sorted(self.modes):
            for r in self.modes[l]:
                rows.append(f"{l},{format_float(r.lam.real)},{format_float(r.lam.imag)}")
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "window": list(self.window.as_tuple()),
            "l_max": self.l_max,
            "modes": {str(l): [r.to_dict() for r in recs] for l, recs in sorted(self.modes.items())},
            "angular_multiplicity": {str(l): self.multiplicity(l) for l in sorted(self.modes)},
            "meta": self.meta,
        }

    def save(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def radial_modes(geometry: Geometry, potential: PotentialSpec, window: Rect, *,
                 l_range: Sequence[int] | None = None, bc: BoundaryCondition | None = None,
                 l_cap: int = 200, tol: float = 1e-10) -> ModeTable:
    """Per-``l`` radial eigenvalues in ``window``.

    Without ``l_range``, ``l`` increases from 0 until the first ``l`` whose
    list is empty; that ``l`` is stored as ``l_max``.  Running past ``l_cap``
    raises :class:`LMaxExceeded`.
    """
    if geometry.kind == "cube":
        raise InvalidParameter("use cube_modes for cubes")
    kind = "radial3d" if geometry.kind == "ball3d" else "radial2d"
    dim = 3 if kind == "radial3d" else 2
    spec = potential if potential.dimension == dim else _lift(potential, dim)
    table = ModeTable(geometry, window, meta={"form": kind})
    ls = list(l_range) if l_range is not None else None
    l = 0
    while True:
        if ls is not None:
            if l >= len(ls):
                break
            cur = ls[l]
        else:
            cur = l
            if cur > l_cap:
                raise LMaxExceeded(f"window still populated at l = {l_cap}")
        p = truncate(spec, geometry.s, kind=kind, l=cur, right=bc, r_in=geometry.r_in)
        recs = find_eigenvalues(p, window, tol)
        table.modes[cur] = recs
        if ls is None and not recs:
            table.l_max = cur
            break
        l += 1
    if ls is not None:
        table.l_max = max(ls) if ls else None
    return table


def _lift(potential: PotentialSpec, dim: int) -> PotentialSpec:
    from .polynomial import RadialFunction

    if potential.dimension != 1:
        raise InvalidParameter("potential dimension does not match the geometry")
    u = RadialFunction(potential.u, dim) if potential.u is not None else None
    return PotentialSpec(RadialFunction(potential.q0, dim), u, None, potential.declared_bounds, dim,
                         potential.name)


def cube_modes(geometry: Geometry, potential: PotentialSpec, window: Rect, *,
               bc: BoundaryCondition | None = None, tol: float = 1e-10) -> ModeTable:
    """One-dimensional eigenvalues for a sum-separable potential on a cube.

    ``potential`` is the one-dimensional summand.  The 1-D window is chosen
    wide enough to certify completeness of the ``d``-fold sums in ``window``.
    """
    if geometry.kind != "cube":
        raise InvalidParameter("cube_modes needs a cube geometry")
    p = truncate(potential, geometry.s, left=bc, right=bc)
    # lowest real part first, then widen to the coverage bound
    probe = find_eigenvalues(p, Rect(window.re_lo - 1.0, window.re_hi, window.im_lo, window.im_hi), tol)
    if not probe:
        raise WindowNotCovered("no one-dimensional eigenvalue found below the window's right edge")
    re_min = min(r.lam.real for r in probe)
    d = geometry.d
    re_hi = window.re_hi - (d - 1) * re_min
    im_lo = window.im_lo - (d - 1) * max(0.0, window.im_hi)
    im_hi = window.im_hi - (d - 1) * min(0.0, window.im_lo)
    rect = Rect(min(window.re_lo - 1.0, re_min - 1.0), re_hi + 1e-3, min(im_lo, window.im_lo),
                max(im_hi, window.im_hi))
    recs = find_eigenvalues(p, rect, tol)
    return ModeTable(geometry, window, {0: recs}, 0, {"complete_to": re_hi + 1e-3, "form": "cartesian"})
