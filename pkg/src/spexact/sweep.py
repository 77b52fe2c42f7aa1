"""Eigenvalue sweeps over growing truncation sizes.

A sweep solves the truncated problem for every size, links eigenvalues of
consecutive sizes into trajectories, and sorts the trajectories into those
that settle (approximating true eigenvalues) and those that escape as
complex-conjugate pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidParameter, TooShort, UnknownTrajectory
from .io import atomic_write_text, format_float
from .potentials import PotentialSpec
from .rect import Rect
from .shooting import BoundaryCondition, EigenRecord, TruncatedProblem, find_eigenvalues, truncate

__all__ = [
    "ProblemTemplate",
    "SweepPlan",
    "RateFit",
    "Trajectory",
    "SweepResult",
    "run_sweep",
    "track",
    "classify",
    "fit_rate",
    "rate_bound_check",
    "parse_sizes",
    "sweep",
]

CLASSES = ("converged", "diverging_pair", "unresolved")


@dataclass(frozen=True)
class ProblemTemplate:
    """Everything about a truncated problem except its size."""

    spec: PotentialSpec
    kind: str = "cartesian"
    l: int = 0
    left: BoundaryCondition | None = None
    right: BoundaryCondition | None = None
    r_in: float | None = None
    ode_tol: float = 1e-11

    def instantiate(self, s: float) -> TruncatedProblem:
        return truncate(self.spec, s, kind=self.kind, l=self.l, left=self.left, right=self.right,
                        r_in=self.r_in, tol=self.ode_tol)


@dataclass(frozen=True)
class SweepPlan:
    template: ProblemTemplate
    sizes: tuple[float, ...]
    window: Rect
    tol: float = 1e-8
    classify_tol: float = 1e-6

    def __post_init__(self):
        sizes = tuple(float(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise InvalidParameter("a sweep needs at least one size")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InvalidParameter("sizes must be strictly increasing")


def parse_sizes(text: str) -> tuple[float, ...]:
    """``"a:step:b"`` (inclusive) or a comma-separated list."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or not parts[1] > 0:
            raise InvalidParameter(f"bad size range {text!r}; expected start:step:stop")
        start, step, stop = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(count))
    return tuple(float(p) for p in text.split(","))


@dataclass(frozen=True)
class RateFit:
    model: str
    slope: float
    intercept: float
    r_squared: float
    s: tuple[float, ...] = ()
    log_error: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"model": self.model, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "s": list(self.s), "log_error": list(self.log_error)}

    @classmethod
    def from_dict(cls, d: dict) -> "RateFit":
        return cls(d["model"], d["slope"], d["intercept"], d["r_squared"], tuple(d.get("s", ())),
                   tuple(d.get("log_error", ())))


@dataclass
class Trajectory:
    id: int
    records: list[EigenRecord]
    classification: str = "unresolved"
    partner: int | None = None
    limit: complex | None = None
    rate: RateFit | None = None
    ambiguous: bool = False

    @property
    def s(self) -> np.ndarray:
        return np.array([r.s for r in self.records])

    @property
    def lams(self) -> np.ndarray:
        return np.array([r.lam for r in self.records], dtype=complex)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.classification,
            "partner": self.partner,
            "limit": None if self.limit is None else [self.limit.real, self.limit.imag],
            "rate": None if self.rate is None else self.rate.to_dict(),
            "ambiguous": self.ambiguous,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        lim = d.get("limit")
        rate = d.get("rate")
        return cls(int(d["id"]), [EigenRecord.from_dict(r) for r in d["records"]], d["class"],
                   d.get("partner"), None if lim is None else complex(*lim),
                   None if rate is None else RateFit.from_dict(rate), bool(d.get("ambiguous", False)))


# ---------------------------------------------------------------------------
# sweeping and tracking


def run_sweep(plan: SweepPlan) -> list[tuple[float, list[EigenRecord]]]:
    """Eigenvalues in the window for every size, each slice sorted by ``(Re, Im)``."""
    out = []
    for s in plan.sizes:
        recs = find_eigenvalues(plan.template.instantiate(s), plan.window, plan.tol)
        out.append((s, sorted(recs, key=lambda r: (r.lam.real, r.lam.imag))))
    return out


def _gate(prev: np.ndarray, new: np.ndarray, floor: float, factor: float) -> float:
    if prev.size == 0 or new.size == 0:
        return floor
    d = np.abs(prev[:, None] - new[None, :])
    return max(floor, factor * float(np.median(np.min(d, axis=1))))


def track(slices: Sequence[tuple[float, Sequence[EigenRecord]]], *, gate_floor: float = 0.5,
          gate_factor: float = 5.0, conj_rtol: float = 1e-6, min_growth_steps: int = 3) -> list[Trajectory]:
    """Greedy nearest-neighbour continuation of eigenvalues across sizes.

    A match whose runner-up is within 5% of the best distance (and is not the
    complex conjugate of the best candidate) marks the trajectory ambiguous.
    Two trajectories are linked as a pair when they are complex conjugates of
    each other with ``|Im|`` growing over ``min_growth_steps`` steps.
    """
    if len(slices) < 2:
        raise TooShort("tracking needs at least two sizes")
    trajectories: list[Trajectory] = []
    active: list[int] = []
    for step, (s, recs) in enumerate(slices):
        recs = list(recs)
        if step == 0:
            for r in recs:
                trajectories.append(Trajectory(len(trajectories), [r]))
            active = [t.id for t in trajectories]
            continue
        prev = np.array([trajectories[i].records[-1].lam for i in active], dtype=complex)
        new = np.array([r.lam for r in recs], dtype=complex)
        gate = _gate(prev, new, gate_floor, gate_factor)
        pairs = []
        if prev.size and new.size:
            dist = np.abs(prev[:, None] - new[None, :])
            for i in range(prev.size):
                for j in range(new.size):
                    if dist[i, j] < gate:
                        pairs.append((dist[i, j], i, j))
            pairs.sort()
        used_prev, used_new = set(), set()
        next_active = []
        for dij, i, j in pairs:
            if i in used_prev or j in used_new:
                continue
            used_prev.add(i)
            used_new.add(j)
            t = trajectories[active[i]]
            others = [(dist[i, k], k) for k in range(new.size) if k != j]
            for dk, k in others:
                if dk <= 1.05 * dij and abs(new[k] - np.conj(new[j])) > 1e-9 * (1 + abs(new[j])):
                    t.ambiguous = True
            t.records.append(recs[j])
            next_active.append(t.id)
        for j, r in enumerate(recs):
            if j not in used_new:
                trajectories.append(Trajectory(len(trajectories), [r]))
                next_active.append(trajectories[-1].id)
        active = next_active
    _link_pairs(trajectories, conj_rtol, min_growth_steps, gate_floor)
    return trajectories


def _im_grows(t: Trajectory, steps: int) -> bool:
    im = np.abs(t.lams.imag)
    if im.size < steps + 1:
        return False
    return bool(np.all(np.diff(im[-(steps + 1):]) > 0))


def _link_pairs(trajectories: list[Trajectory], rtol: float, steps: int, gate: float) -> None:
    by_last: dict[float, list[Trajectory]] = {}
    for t in trajectories:
        by_last.setdefault(t.records[-1].s, []).append(t)
    for group in by_last.values():
        for a in group:
            if a.partner is not None or not _im_grows(a, steps):
                continue
            best = None
            for b in group:
                if b is a or b.partner is not None or not _im_grows(b, steps):
                    continue
                n = min(len(a.records), len(b.records), steps + 1)
                la, lb = a.lams[-n:], b.lams[-n:]
                if np.array_equal(a.s[-n:], b.s[-n:]):
                    gap = float(np.max(np.abs(la - np.conj(lb))))
                    if gap < gate and (best is None or gap < best[0]):
                        best = (gap, b)
            if best is not None:
                a.partner, best[1].partner = best[1].id, a.id


def classify(t: Trajectory, tol: float) -> str:
    """``converged``, ``diverging_pair`` or ``unresolved``; also stores the limit on ``t``.

    Converged means the last increment is below ``tol`` and not larger than
    the one before (or that one was below ``tol`` too), with ``|Im|`` not
    growing over the last steps.
    """
    if len(t.records) < 3:
        raise TooShort("classification needs at least three records")
    lam = t.lams
    inc = np.abs(np.diff(lam))
    im = np.abs(lam.imag)
    tail_im_growing = bool(np.all(np.diff(im[-3:]) > tol))
    if inc[-1] < tol and (inc[-1] <= inc[-2] or inc[-2] < tol) and not tail_im_growing:
        t.classification = "converged"
        t.limit = complex(lam[-1])
    elif t.partner is not None and tail_im_growing:
        t.classification = "diverging_pair"
        t.limit = None
    else:
        t.classification = "unresolved"
        t.limit = None
    return t.classification


# ---------------------------------------------------------------------------
# rates


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), min(1.0, max(0.0, r2))


def fit_rate(t: Trajectory, limit: complex | None = None, *, floor: float = 1e-13) -> RateFit:
    """Fit ``log|lambda(s) - limit|`` against ``s`` and against ``log s``; keep the better model."""
    limit = t.limit if limit is None else complex(limit)
    if limit is None:
        raise InsufficientData("no limit given and the trajectory has none")
    s = t.s
    err = np.abs(t.lams - limit)
    keep = err > floor
    if np.count_nonzero(keep) < 4:
        raise InsufficientData("fewer than four points above the noise floor")
    s, y = s[keep], np.log(err[keep])
    exp_fit = _linfit(s, y)
    alg_fit = _linfit(np.log(s), y)
    model, (slope, intercept, r2) = ("exponential", exp_fit) if exp_fit[2] >= alg_fit[2] else ("algebraic", alg_fit)
    return RateFit(model, slope, intercept, r2, tuple(float(v) for v in s), tuple(float(v) for v in y))


def rate_bound_check(t: Trajectory, tails: Sequence[float], limit: complex | None = None) -> dict:
    """Ratio ``|lambda - lambda_n| / tail_n`` over the trajectory.

    ``satisfied`` means every usable ratio is finite and the running maximum
    no longer grows over the second half of the samples.
    """
    limit = t.limit if limit is None else complex(limit)
    if limit is None:
        raise InsufficientData("no limit given and the trajectory has none")
    tails = np.asarray(tails, dtype=float)
    if tails.size != len(t.records):
        raise InvalidParameter("one tail value per record is required")
    err = np.abs(t.lams - limit)
    usable = tails >= 1e-15
    if not np.any(usable):
        raise InsufficientData("all tails below 1e-15")
    ratio = err[usable] / tails[usable]
    c_hat = float(np.max(ratio))
    running = np.maximum.accumulate(ratio)
    mid = (running.size - 1) // 2
    satisfied = bool(np.isfinite(c_hat) and running[-1] <= running[mid])
    return {"c_hat": c_hat, "satisfied": satisfied, "ratios": ratio.tolist()}


# ---------------------------------------------------------------------------
# results and serialisation


@dataclass
class SweepResult:
    sizes: list[float]
    window: Rect
    slices: list[tuple[float, list[EigenRecord]]]
    trajectories: list[Trajectory]
    meta: dict = field(default_factory=dict)

    def trajectory(self, tid: int) -> Trajectory:
        for t in self.trajectories:
            if t.id == tid:
                return t
        raise UnknownTrajectory(f"no trajectory with id {tid}")

    def to_json(self) -> str:
        doc = {
            "sizes": self.sizes,
            "window": list(self.window.as_tuple()),
            "slices": [{"s": s, "records": [r.to_dict() for r in recs]} for s, recs in self.slices],
            "trajectories": [t.to_dict() for t in self.trajectories],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        doc = json.loads(text)
        slices = [(float(sl["s"]), [EigenRecord.from_dict(r) for r in sl["records"]]) for sl in doc["slices"]]
        return cls(list(doc["sizes"]), Rect(*doc["window"]), slices,
                   [Trajectory.from_dict(t) for t in doc["trajectories"]], doc.get("meta", {}))

    def to_csv(self) -> str:
        rows = ["s,re,im,multiplicity,trajectory_id,class"]
        entries = []
        for t in self.trajectories:
            for r in t.records:
                entries.append((r.s, r.lam.real, r.lam.imag, r.multiplicity, t.id, t.classification))
        entries.sort(key=lambda e: (e[0], e[1], e[2], e[4]))
        for s, re, im, m, tid, cls_ in entries:
            rows.append(f"{format_float(s)},{format_float(re)},{format_float(im)},{m},{tid},{cls_}")
        return "\n".join(rows) + "\n"

    def save(self, path, fmt: str | None = None) -> None:
        fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
        atomic_write_text(path, self.to_csv() if fmt == "csv" else self.to_json())


def sweep(plan: SweepPlan, *, gate_floor: float = 0.5, gate_factor: float = 5.0,
          fit_rates: bool = True) -> SweepResult:
    """``run_sweep`` + ``track`` + ``classify`` (+ ``fit_rate`` where possible)."""
    slices = run_sweep(plan)
    if len(slices) > 1:
        trajectories = track(slices, gate_floor=gate_floor, gate_factor=gate_factor)
    else:
        trajectories = [Trajectory(i, [r]) for i, r in enumerate(slices[0][1])]
    for t in trajectories:
        if len(t.records) >= 3:
            classify(t, plan.classify_tol)
        if fit_rates and t.classification == "converged":
            try:
                t.rate = fit_rate(t)
            except InsufficientData:
                t.rate = None
    meta = {"tol": plan.tol, "classify_tol": plan.classify_tol, "gate_floor": gate_floor, "gate_factor": gate_factor,
            "multiplicity_convention": "winding number of the matching Wronskian"}
    return SweepResult(list(plan.sizes), plan.window, slices, trajectories, meta)
