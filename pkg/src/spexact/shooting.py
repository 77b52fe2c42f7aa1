"""Complex shooting for truncated eigenproblems.

Two one-sided solutions, each satisfying one boundary condition, are
integrated to a matching point where their Wronskian is formed.  The
Wronskian is an entire function of ``lambda`` whose zeros are the
eigenvalues; they are counted with the argument principle and polished by
Newton's method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contour import PhaseSampler, locate_zeros, winding_number, with_perturbation
from .errors import InvalidParameter, MatchFailure, NonConvergence, NotAnEigenvalue, OutOfRange
from .ode import OdeForm, _series_values, propagate
from .potentials import PotentialSpec
from .rect import Rect

__all__ = [
    "BoundaryCondition",
    "TruncatedProblem",
    "EigenRecord",
    "SampledFunction",
    "truncate",
    "miss_distance",
    "miss_distance_batch",
    "count_eigenvalues",
    "find_eigenvalues",
    "eigenfunction",
    "tail_mass",
    "tail_bound",
]

MULTIPLICITY_CONVENTION = "winding number of the matching Wronskian"
_NOISE_FLOOR = 1e-8  # relative accuracy below which Newton steps are integration noise


@dataclass(frozen=True)
class BoundaryCondition:
    """``dirichlet``, ``robin`` (``d f/d nu + a f = 0``, outward normal) or ``regular_origin``."""

    kind: str
    a: complex = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin", "regular_origin"):
            raise InvalidParameter(f"unknown boundary condition {self.kind!r}")
        if not np.isfinite(complex(self.a)):
            raise InvalidParameter("Robin coefficient must be finite")

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls("dirichlet")

    @classmethod
    def robin(cls, a: complex) -> "BoundaryCondition":
        return cls("robin", complex(a))

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls("robin", 0.0)

    @classmethod
    def regular_origin(cls) -> "BoundaryCondition":
        return cls("regular_origin")

    @classmethod
    def parse(cls, text: str) -> "BoundaryCondition":
        """``dirichlet``, ``neumann`` or ``robin:<a>``."""
        t = text.strip().lower()
        if t == "dirichlet":
            return cls.dirichlet()
        if t == "neumann":
            return cls.neumann()
        if t.startswith("robin"):
            _, _, val = t.partition(":")
            try:
                return cls.robin(complex(val.replace("i", "j")) if val else 0.0)
            except ValueError:
                raise InvalidParameter(f"bad Robin coefficient in {text!r}") from None
        raise InvalidParameter(f"unknown boundary condition {text!r}")

    def to_dict(self) -> dict:
        a = complex(self.a)
        return {"kind": self.kind, "a": [a.real, a.imag]}


@dataclass(frozen=True)
class TruncatedProblem:
    """One eigenproblem for ``form`` on ``interval`` with separated boundary conditions.

    ``interfaces`` holds ``(site, coupling)`` pairs imposing
    ``f'(site+) - f'(site-) = coupling * f(site)``.
    """

    form: OdeForm
    interval: tuple[float, float]
    left_bc: BoundaryCondition
    right_bc: BoundaryCondition
    interfaces: tuple[tuple[float, complex], ...] = ()
    tol: float = 1e-11
    match_point: float | None = None

    def __post_init__(self):
        lo, hi = (float(v) for v in self.interval)
        object.__setattr__(self, "interval", (lo, hi))
        if not hi > lo:
            raise InvalidParameter("interval must have positive length")
        sites = tuple((float(x), complex(c)) for x, c in self.interfaces)
        object.__setattr__(self, "interfaces", sites)
        xs = [x for x, _ in sites]
        if any(not lo < x < hi for x in xs) or any(b <= a for a, b in zip(xs, xs[1:])):
            raise InvalidParameter("interface sites must be interior and strictly increasing")
        if self.right_bc.kind == "regular_origin":
            raise InvalidParameter("regular_origin is a left-end condition")
        if self.left_bc.kind == "regular_origin" and not (self.form.radial and lo == 0.0):
            raise InvalidParameter("regular_origin needs a radial form on [0, s]")
        if self.form.radial and lo < 0:
            raise InvalidParameter("radial forms live on r >= 0")
        if self.form.radial and lo == 0.0 and self.left_bc.kind != "regular_origin":
            raise InvalidParameter("a radial problem starting at r = 0 needs regular_origin")
        if self.match_point is not None and not lo < self.match_point < hi:
            raise InvalidParameter("matching point must be interior")

    @property
    def s(self) -> float:
        return self.interval[1]

    @property
    def x_match(self) -> float:
        if self.match_point is not None:
            return float(self.match_point)
        return 0.5 * (self.interval[0] + self.interval[1])

    @property
    def start(self) -> float:
        """Left starting abscissa; the series start sits slightly off the origin."""
        lo, hi = self.interval
        if self.left_bc.kind == "regular_origin":
            return min(1e-3, hi / 1e3)
        return lo

    def with_interval(self, interval, match_point: float | None = None) -> "TruncatedProblem":
        lo, hi = interval
        sites = tuple((x, c) for x, c in self.interfaces if lo < x < hi)
        return TruncatedProblem(self.form, (lo, hi), self.left_bc, self.right_bc, sites, self.tol,
                                match_point)


def truncate(spec: PotentialSpec, s: float, *, kind: str = "cartesian", l: int = 0,
             left: BoundaryCondition | None = None, right: BoundaryCondition | None = None,
             r_in: float | None = None, tol: float = 1e-11) -> TruncatedProblem:
    """Truncated problem for ``spec`` on ``(-s, s)`` (cartesian) or ``(r_in or 0, s)`` (radial).

    Delta sites of ``spec`` inside the interval become interfaces.
    """
    one_d = spec.radial_restriction() if spec.dimension > 1 else spec
    form = OdeForm(kind, one_d, l)
    right = right or BoundaryCondition.dirichlet()
    if kind == "cartesian":
        interval = (-float(s), float(s))
        left = left or BoundaryCondition.dirichlet()
    elif r_in is None:
        interval = (0.0, float(s))
        left = BoundaryCondition.regular_origin()
    else:
        interval = (float(r_in), float(s))
        left = left or BoundaryCondition.dirichlet()
    sites = tuple((x, c) for x, c in one_d.delta_sites() if interval[0] < x < interval[1])
    return TruncatedProblem(form, interval, left, right, sites, tol)


@dataclass(frozen=True)
class EigenRecord:
    lam: complex
    multiplicity: int
    residual: float
    s: float

    def to_dict(self) -> dict:
        return {"re": self.lam.real, "im": self.lam.imag, "multiplicity": self.multiplicity,
                "residual": None if math.isnan(self.residual) else self.residual, "s": self.s}

    @classmethod
    def from_dict(cls, d: dict) -> "EigenRecord":
        res = d.get("residual")
        return cls(complex(d["re"], d["im"]), int(d["multiplicity"]),
                   math.nan if res is None else float(res), float(d["s"]))


# ---------------------------------------------------------------------------
# one-sided solutions


def _initial(bc: BoundaryCondition, m: int, side: str):
    if bc.kind == "dirichlet":
        f, g = 0.0, 1.0
    else:
        a = complex(bc.a)
        f, g = 1.0, (a if side == "left" else -a)
        mag = max(1.0, abs(g))
        f, g = f / mag, g / mag
    return (np.full(m, f, dtype=complex), np.full(m, g, dtype=complex), np.zeros(m))


def _side_states(p: TruncatedProblem, lams: np.ndarray, side: str, grid: np.ndarray | None = None):
    """States at the matching point of the left or right solution.

    With ``grid`` also returns samples ``(x, F, LS)`` at the grid points on
    this side of the matching point.
    """
    m = lams.size
    xm = p.x_match
    lo, hi = p.interval
    if side == "left":
        x0 = p.start
        if p.left_bc.kind == "regular_origin":
            f, g, ls = _series_values(p.form, lams, x0)
        else:
            f, g, ls = _initial(p.left_bc, m, "left")
        stops = [(x, c) for x, c in p.interfaces if x <= xm]
    else:
        x0 = hi
        f, g, ls = _initial(p.right_bc, m, "right")
        stops = [(x, c) for x, c in reversed(p.interfaces) if x > xm]
    samples = []
    if grid is not None and side == "left" and p.left_bc.kind == "regular_origin":
        below = grid[(grid < x0) & (grid >= lo)]
        if below.size:
            samples.append(_series_samples(p.form, lams, below))
    x = x0
    for target, jump in [*stops, (xm, None)]:
        if target != x:
            pts = [x, target]
            if grid is not None:
                inner = grid[(grid > min(x, target)) & (grid < max(x, target))]
                inner = np.sort(inner) if target > x else np.sort(inner)[::-1]
                pts = [x, *inner, target]
            F, G, LS, _ = propagate(p.form, lams, pts, f, g, ls, p.tol)
            if grid is not None:
                keep = np.isin(np.asarray(pts), grid)
                keep[0] = keep[0] and x == x0
                if np.any(keep):
                    samples.append((np.asarray(pts)[keep], F[:, keep], LS[:, keep]))
            f, g, ls = F[:, -1], G[:, -1], LS[:, -1]
            x = target
        if jump is not None:
            g = g + jump * f if side == "left" else g - jump * f
            mag = np.maximum(np.abs(f), np.abs(g))
            f, g, ls = f / mag, g / mag, ls + np.log(mag)
    return f, g, ls, samples


def _series_samples(form: OdeForm, lams: np.ndarray, r: np.ndarray):
    from .ode import series_coefficient

    c2 = series_coefficient(form, lams)[:, None]
    l = form.l
    vals = (1 + c2 * r[None, :] ** 2) * (r[None, :] ** l if l else 1.0)
    return r, vals, np.zeros(vals.shape)


def miss_distance_batch(p: TruncatedProblem, lams) -> tuple[np.ndarray, np.ndarray]:
    """Renormalised Wronskians ``w`` and log-scales; ``W = w * exp(log_scale)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    fl, gl, lsl, _ = _side_states(p, lams, "left")
    fr, gr, lsr, _ = _side_states(p, lams, "right")
    nl = np.maximum(np.abs(fl), np.abs(gl))
    nr = np.maximum(np.abs(fr), np.abs(gr))
    w = (fl * gr - gl * fr) / (nl * nr)
    return w, lsl + lsr + np.log(nl) + np.log(nr)


@dataclass(frozen=True)
class MissDistance:
    w: complex
    log_scale: float

    @property
    def value(self) -> complex:
        """The Wronskian itself (may overflow for large log scales)."""
        return self.w * math.exp(min(self.log_scale, 709.0))


def miss_distance(p: TruncatedProblem, lam: complex) -> MissDistance:
    w, ls = miss_distance_batch(p, [lam])
    return MissDistance(complex(w[0]), float(ls[0]))


# ---------------------------------------------------------------------------
# counting and locating


def _sampler(p: TruncatedProblem) -> PhaseSampler:
    def evaluate(zs):
        w, ls = miss_distance_batch(p, zs)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(w)) + ls + 1j * np.angle(w)

    return PhaseSampler(evaluate)


def count_eigenvalues(p: TruncatedProblem, rect: Rect, *, clearance: float = 1e-3,
                      sampler: PhaseSampler | None = None) -> int:
    """Eigenvalues of ``p`` inside ``rect`` counted with multiplicity."""
    return winding_number(sampler or _sampler(p), rect, clearance=clearance)


def _newton(p: TruncatedProblem, box: Rect, tol: float, max_iter: int = 60):
    """Newton iteration from the box centre with a central-difference derivative."""
    lam = box.center
    limit = box.expanded(0.5 * box.diameter)
    prev = math.inf
    small_steps = 0
    for _ in range(max_iter):
        h = 1e-6 * (1 + abs(lam))
        w, ls = miss_distance_batch(p, [lam, lam + h, lam - h])
        if w[0] == 0:
            return lam, 0.0
        rp = w[1] / w[0] * math.exp(ls[1] - ls[0])
        rm = w[2] / w[0] * math.exp(ls[2] - ls[0])
        dlog = (rp - rm) / (2 * h)
        if dlog == 0 or not np.isfinite(dlog):
            return None
        step = -1.0 / dlog
        lam = lam + step
        if not limit.contains(lam):
            return None
        size = abs(step)
        if size < 1e-13 * (1 + abs(lam)):
            break
        if size < tol:
            small_steps += 1
            if size >= 0.5 * prev or small_steps >= 3:
                break
        elif size < _NOISE_FLOOR * (1 + abs(lam)) and size >= 0.5 * prev:
            # steps stopped contracting: tol is below what the integrator resolves
            break
        prev = size
    else:
        if prev > tol:
            return None
    res = float(abs(miss_distance_batch(p, [lam])[0][0]))
    return complex(lam), res


def find_eigenvalues(p: TruncatedProblem, rect: Rect, tol: float = 1e-8, *,
                     clearance: float = 1e-3, perturb: bool = True) -> list[EigenRecord]:
    """Eigenvalues in ``rect`` with multiplicities, sorted by ``(Re, Im)``.

    If an eigenvalue sits on the boundary of ``rect`` and ``perturb`` is set,
    the rectangle is grown or shrunk by 1% of its diameter.
    """
    sampler = _sampler(p)

    def polish(box):
        return _newton(p, box, tol)

    def run(r):
        return locate_zeros(sampler, r, polish, tol=tol, clearance=clearance)

    if perturb:
        zeros, _ = with_perturbation(run, rect)
    else:
        zeros = run(rect)
    out = []
    for z, m, res in zeros:
        if m == 1 and math.isnan(res):
            raise NonConvergence((z.real, z.imag), "Newton polishing failed in a minimal box")
        out.append(EigenRecord(complex(z), int(m), float(res), p.s))
    return out


# ---------------------------------------------------------------------------
# eigenfunctions


@dataclass(frozen=True)
class SampledFunction:
    """Samples of an eigenfunction; ``weight_power`` is 1 or 2 for radial measures ``r dr``, ``r^2 dr``."""

    x: np.ndarray
    values: np.ndarray
    lam: complex
    weight_power: int = 0
    mismatch: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def weights(self) -> np.ndarray:
        return np.abs(self.x) ** self.weight_power if self.weight_power else np.ones(self.x.size)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2 * self.weights()

    def norm(self) -> float:
        """``(sum |phi_i|^2 w_i h)^(1/2)``, the normalisation used by :func:`eigenfunction`."""
        return float(math.sqrt(np.sum(self.density()) * self.h))


def eigenfunction(p: TruncatedProblem, lam: complex, grid: int | Sequence[float] = 2001, *,
                  tol: float = 1e-6, mismatch_tol: float = 1e-3) -> SampledFunction:
    """Normalised eigenfunction sampled on a uniform grid over the interval.

    ``grid`` is a point count or an explicit uniform grid.  The right
    solution is scaled to the left one at the matching point; the relative
    mismatch of the other component is recorded on the result.
    """
    lam = complex(lam)
    w = miss_distance(p, lam)
    if not abs(w.w) <= tol:
        raise NotAnEigenvalue(f"|w({lam})| = {abs(w.w):.3e} exceeds {tol:.1e}")
    lo, hi = p.interval
    x = np.linspace(lo, hi, int(grid)) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    if x.size < 3:
        raise InvalidParameter("grid needs at least three points")
    lams = np.array([lam])
    xm = p.x_match
    fl, gl, lsl, left = _side_states(p, lams, "left", x[x <= xm])
    fr, gr, lsr, right = _side_states(p, lams, "right", x[x > xm])
    fl, gl, lsl, fr, gr, lsr = (v[0] for v in (fl, gl, lsl, fr, gr, lsr))
    # right samples are scaled by k = u/v (in log-safe form), matching the larger component
    if abs(fl) >= abs(gl):
        ratio, other = fl / fr, (gl, gr)
    else:
        ratio, other = gl / gr, (fl, fr)
    if not np.isfinite(ratio) or ratio == 0:
        raise MatchFailure("one-sided solutions cannot be matched at the matching point")
    mismatch = abs(other[0] - ratio * other[1]) / max(abs(fl), abs(gl))
    if mismatch > mismatch_tol:
        raise MatchFailure(f"relative mismatch {mismatch:.3e} at the matching point")
    xs, vals, logs = [], [], []
    for px, F, LS in left:
        xs.append(px), vals.append(F[0]), logs.append(LS[0])
    for px, F, LS in right:
        xs.append(px), vals.append(ratio * F[0]), logs.append(LS[0] - lsr + lsl)
    xs = np.concatenate(xs)
    vals = np.concatenate(vals)
    logs = np.concatenate(logs)
    order = np.argsort(xs)
    xs, vals, logs = xs[order], vals[order], logs[order]
    if xs.size != x.size:
        # grid points at the boundary are fixed by the boundary condition or missing
        full = np.zeros(x.size, dtype=complex)
        full_log = np.full(x.size, -np.inf)
        pos = np.searchsorted(x, xs)
        full[pos], full_log[pos] = vals, logs
        for i in np.setdiff1d(np.arange(x.size), pos):
            bc = p.left_bc if i == 0 else p.right_bc
            if bc.kind == "dirichlet" or i not in (0, x.size - 1):
                continue
            j = 1 if i == 0 else x.size - 2
            full[i], full_log[i] = full[j], full_log[j]  # Robin end: nearest neighbour
        vals, logs = full, full_log
    finite = np.isfinite(logs)
    top = np.max(logs[finite])
    phi = np.where(finite, vals * np.exp(np.where(finite, logs - top, 0.0)), 0.0)
    weight = p.form.first_order_coefficient
    out = SampledFunction(x, phi, lam, weight, float(mismatch),
                          {"multiplicity_convention": MULTIPLICITY_CONVENTION})
    nrm = out.norm()
    if not nrm > 0:
        raise MatchFailure("eigenfunction vanished on the grid")
    # fix the global phase so the largest sample is real and positive
    k = int(np.argmax(np.abs(phi)))
    phase = phi[k] / abs(phi[k])
    return SampledFunction(x, phi / (nrm * phase), lam, weight, float(mismatch), out.meta)


def tail_mass(phi: SampledFunction, r: float) -> float:
    """``L2`` mass of ``phi`` on ``|x| > r``.

    ``r == 0`` gives the discrete norm (1 for output of :func:`eigenfunction`);
    for ``r > 0`` the density is integrated by trapezoids cut exactly at
    ``|x| = r`` so the result does not jump when ``r`` crosses a sample.
    """
    r = float(r)
    if not (np.isfinite(r) and r >= 0):
        raise OutOfRange("r must be a finite non-negative radius")
    if r == 0:
        return phi.norm()
    x, y = phi.x, phi.density()
    x0, x1, y0, y1 = x[:-1], x[1:], y[:-1], y[1:]
    slope = (y1 - y0) / (x1 - x0)
    total = 0.0
    # trapezoids clipped to x > r and to x < -r, interpolating y linearly
    for lo, hi in ((r, np.inf), (-np.inf, -r)):
        a, b = np.clip(x0, lo, hi), np.clip(x1, lo, hi)
        ya, yb = y0 + slope * (a - x0), y0 + slope * (b - x0)
        total += float(np.sum(0.5 * (b - a) * (ya + yb)))
    return float(math.sqrt(max(total, 0.0)))


def tail_bound(phi: SampledFunction, r: float, D: float, potential: PotentialSpec,
               case: str = "I") -> float:
    """Decay estimate ``D / ess inf_{|x| >= r} |Q0|**iota`` on the sample points.

    ``iota`` is 1/2 in the sectorial case ``"I"`` and 1 in the accretive case ``"II"``.
    """
    iota = {"I": 0.5, "II": 1.0}.get(case)
    if iota is None:
        raise InvalidParameter("case must be 'I' or 'II'")
    mask = np.abs(phi.x) >= r
    if not np.any(mask):
        raise OutOfRange("no samples beyond r")
    spec = potential.radial_restriction() if potential.dimension > 1 else potential
    q0, _, _ = spec.evaluate_parts(np.abs(phi.x[mask]) if phi.weight_power else phi.x[mask])
    low = float(np.min(np.abs(q0)))
    return math.inf if low == 0 else float(D) / low ** iota
