"""Complex potentials ``Q = Q0 - U + W`` and their spectral enclosures.

A :class:`PotentialSpec` carries black-box evaluators for the regular part
``Q0``, the non-positive part ``-U`` and the singular part ``W``.  The
assumptions behind the truncation theory are pointwise inequalities, so they
are checked on sample grids and reported with the worst offending point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigError, EmptySamples, InvalidParameter, NonFiniteEvaluation, OutOfRange
from .polynomial import PiecewisePoly, RadialFunction, parse_expression

__all__ = [
    "BoundedW",
    "DeltaW",
    "DeclaredBounds",
    "PotentialSpec",
    "PlaneRegion",
    "AssumptionReport",
    "SampleBox",
    "sectoriality_angle",
    "verify_assumptions",
    "enclosure_region",
    "resolvent_bound",
    "completeness_threshold",
    "builtin",
    "BUILTIN_NAMES",
]

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundedW:
    """Bounded singular part; ``radius`` is the ball outside which it is controlled."""

    evaluator: Evaluator
    radius: float


@dataclass(frozen=True)
class DeltaW:
    """``coupling * delta(x - site)``; only meaningful in one dimension."""

    site: float
    coupling: complex


@dataclass(frozen=True)
class DeclaredBounds:
    theta: float | None = None
    c0: float | None = None
    shift: complex = 0.0
    a_grad: float | None = None
    b_grad: float | None = None
    a_U: float | None = None
    b_U: float | None = None
    a_W: float | None = None
    b_W: float | None = None
    M_W: float | None = None

    def __post_init__(self):
        if self.theta is not None and not 0.0 <= self.theta < math.pi:
            raise InvalidParameter("declared theta must lie in [0, pi)")
        if self.c0 is not None and not self.c0 > 0:
            raise InvalidParameter("declared c0 must be positive")
        for name in ("a_grad", "b_grad", "a_U", "b_U", "a_W", "b_W", "M_W"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidParameter(f"declared {name} must be non-negative")


@dataclass(frozen=True)
class PotentialSpec:
    """Decomposition ``Q = q0 - u + w`` of a potential on ``R^dimension``.

    Evaluators take a 1-D array of coordinates when ``dimension == 1`` and an
    ``(m, dimension)`` array otherwise.
    """

    q0: Evaluator
    u: Evaluator | None = None
    w_kind: BoundedW | DeltaW | None = None
    declared_bounds: DeclaredBounds | None = None
    dimension: int = 1
    name: str = "custom"

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise InvalidParameter("dimension must be 1, 2 or 3")
        if isinstance(self.w_kind, DeltaW) and self.dimension != 1:
            raise InvalidParameter("delta interactions are only supported in one dimension")

    def evaluate_parts(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(q0, u, bounded w)`` at the points ``x``; raises on non-finite values."""
        x = np.asarray(x, dtype=float)
        q0 = np.asarray(self.q0(x), dtype=complex)
        u = np.zeros(q0.shape) if self.u is None else np.real(np.asarray(self.u(x)))
        if isinstance(self.w_kind, BoundedW):
            w = np.asarray(self.w_kind.evaluator(x), dtype=complex)
        else:
            w = np.zeros(q0.shape, dtype=complex)
        for arr in (q0, u, w):
            bad = ~np.isfinite(arr)
            if np.any(bad):
                idx = np.unravel_index(np.flatnonzero(bad)[0], bad.shape)
                point = x[idx[0]] if x.ndim > 1 else x[idx]
                raise NonFiniteEvaluation(point)
        return q0, u, w

    def __call__(self, x):
        q0, u, w = self.evaluate_parts(x)
        return q0 - u + w

    def profile(self):
        """One-dimensional total ``q0 - u + w`` (without delta) for the ODE kernel.

        Returns a :class:`PiecewisePoly` when every part is one, so the compiled
        kernel can be used; otherwise a plain callable.
        """
        if self.dimension != 1:
            raise InvalidParameter("profile() needs a one-dimensional spec; use radial_restriction()")
        parts = [self.q0]
        if self.u is not None:
            parts.append(self.u)
        if isinstance(self.w_kind, BoundedW):
            parts.append(self.w_kind.evaluator)
        if all(isinstance(p, PiecewisePoly) for p in parts):
            total = parts[0]
            if self.u is not None:
                total = total - self.u
            if isinstance(self.w_kind, BoundedW):
                total = total + self.w_kind.evaluator
            return total
        return lambda x: complex(self(np.asarray([x], dtype=float))[0])

    def radial_restriction(self) -> "PotentialSpec":
        """The radial profile as a one-dimensional spec (for radial ODE forms)."""
        if self.dimension == 1:
            return self
        parts = {"q0": self.q0, "u": self.u}
        out = {}
        for key, ev in parts.items():
            if ev is None:
                out[key] = None
            elif isinstance(ev, RadialFunction):
                out[key] = ev.profile
            else:
                raise InvalidParameter(f"{key} is not a radial function; cannot restrict to r")
        w = self.w_kind
        if isinstance(w, BoundedW):
            if not isinstance(w.evaluator, RadialFunction):
                raise InvalidParameter("w is not radial")
            w = BoundedW(w.evaluator.profile, w.radius)
        return PotentialSpec(out["q0"], out["u"], w, self.declared_bounds, 1, self.name)

    def delta_sites(self) -> list[tuple[float, complex]]:
        if isinstance(self.w_kind, DeltaW):
            return [(float(self.w_kind.site), complex(self.w_kind.coupling))]
        return []

    def is_real(self) -> bool:
        prof = self.profile() if self.dimension == 1 else self.radial_restriction().profile()
        if isinstance(prof, PiecewisePoly):
            real = prof.is_real()
        else:
            real = False
        for _, c in self.delta_sites():
            real = real and complex(c).imag == 0
        return real


# ---------------------------------------------------------------------------
# sampling helpers


@dataclass(frozen=True)
class SampleBox:
    """Axis-aligned box ``[lo, hi]^d`` sampled with ``n`` points per axis."""

    lo: float
    hi: float
    n: int = 401

    def points(self, dimension: int) -> np.ndarray:
        if self.n < 2 or not self.hi > self.lo:
            raise EmptySamples("sample box must contain at least two points per axis")
        axis = np.linspace(self.lo, self.hi, self.n)
        if dimension == 1:
            return axis
        grids = np.meshgrid(*([axis] * dimension), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)


def _as_points(spec: PotentialSpec, samples) -> np.ndarray:
    pts = np.asarray(samples, dtype=float)
    if pts.size == 0:
        raise EmptySamples("no sample points given")
    if spec.dimension == 1:
        return pts.reshape(-1)
    return pts.reshape(-1, spec.dimension)


def _norm(points: np.ndarray) -> np.ndarray:
    return np.abs(points) if points.ndim == 1 else np.linalg.norm(points, axis=-1)


# ---------------------------------------------------------------------------
# assumption checks


def sectoriality_angle(spec: PotentialSpec, samples, shift: complex = 0.0) -> dict:
    """Semi-angle and lower bound of ``Re`` of ``q0 - shift`` over the samples.

    Returns ``{"theta": ..., "c0": ...}``; ``theta`` is the ``pi/2`` sentinel
    when some sample has ``Re <= 0`` with non-zero imaginary part.
    """
    pts = _as_points(spec, samples)
    q, _, _ = spec.evaluate_parts(pts)
    z = q - shift
    re, im = z.real, np.abs(z.imag)
    c0 = float(np.min(re))
    if np.any((re <= 0) & (im != 0)):
        return {"theta": math.pi / 2, "c0": c0}
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.where(im == 0, 0.0, np.arctan2(im, re))
    return {"theta": float(np.max(ang)), "c0": c0}


def _fit_bound(lhs: np.ndarray, rhs: np.ndarray) -> tuple[float, float]:
    """Constants ``a, b >= 0`` with ``lhs <= a + b * rhs`` on all samples.

    ``b`` comes from a non-negative least-squares fit of ``lhs ~ a + b rhs``;
    ``a`` is then raised to the smallest value making the inequality hold
    everywhere (the slack).
    """
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1.0)
    A = np.column_stack([np.ones_like(rhs), rhs]) / scale
    coef, _ = nnls(A, lhs / scale)
    b = float(coef[1])
    a = max(0.0, float(np.max(lhs - b * rhs)))
    return a, b


@dataclass
class AssumptionReport:
    case: str
    passed: bool
    measured: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return float(v)
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (list, tuple)):
                return [clean(e) for e in v]
            return v

        return {
            "case": self.case,
            "passed": self.passed,
            "measured": {k: clean(v) for k, v in self.measured.items()},
            "violations": [
                {"item": item, "point": clean(point), "value": float(value)}
                for item, point, value in self.violations
            ],
        }


def _growth_witness(q_abs: np.ndarray, radius: np.ndarray, shells: int = 8) -> list[float]:
    rmax = float(np.max(radius))
    edges = np.linspace(0.0, rmax, shells + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (radius >= lo) & (radius <= hi)
        if np.any(mask):
            out.append(float(np.min(q_abs[mask])))
    return out


def _check_growth(witness: list[float]) -> bool:
    """Min |Q0| on the outer half of the shells must be non-decreasing and grow."""
    outer = witness[len(witness) // 2:]
    if len(outer) < 2:
        return True
    return all(b >= a for a, b in zip(outer, outer[1:])) and outer[-1] > outer[0]


def verify_assumptions(spec: PotentialSpec, case: str, sample_box: SampleBox) -> AssumptionReport:
    """Check the sectorial (``"I"``) or accretive (``"II"``) assumption set on a grid."""
    case = {"I": "I_sectorial", "I_sectorial": "I_sectorial", "II": "II_accretive",
            "II_accretive": "II_accretive"}.get(case)
    if case is None:
        raise InvalidParameter("case must be 'I' or 'II'")
    pts = sample_box.points(spec.dimension)
    q0, u, _ = spec.evaluate_parts(pts)
    radius = _norm(pts)
    declared = spec.declared_bounds or DeclaredBounds()
    violations: list = []
    measured: dict = {}

    witness = _growth_witness(np.abs(q0), radius)
    measured["growth_witness"] = witness
    if not _check_growth(witness):
        violations.append(("unboundedness of Q0 (growth)", float(np.max(radius)), witness[-1]))

    def worst(mask_values, label):
        idx = int(np.argmax(mask_values))
        point = pts[idx] if pts.ndim == 1 else pts[idx].tolist()
        violations.append((label, point, float(mask_values[idx])))

    if case == "I_sectorial":
        sec = sectoriality_angle(spec, pts, declared.shift)
        measured["theta_hat"] = sec["theta"]
        measured["c0_hat"] = sec["c0"]
        if np.any(u != 0):
            worst(np.abs(u), "sectorial case requires U = 0")
        if sec["theta"] >= math.pi / 2:
            z = q0 - declared.shift
            worst(np.where(z.real <= 0, -z.real + 1.0, 0.0), "sectoriality of Q0 (theta < pi/2)")
        elif declared.theta is not None and sec["theta"] > declared.theta + 1e-12:
            z = q0 - declared.shift
            excess = np.abs(z.imag) - math.tan(declared.theta) * z.real
            worst(excess, "sectoriality of Q0 with declared theta")
        if not sec["c0"] > 0:
            worst(-(q0 - declared.shift).real, "Re Q0 >= c0 > 0")
        elif declared.c0 is not None and sec["c0"] < declared.c0:
            worst(declared.c0 - (q0 - declared.shift).real, "Re Q0 >= declared c0")
    else:
        re = q0.real
        if np.any(re < 0):
            worst(-re, "Re Q0 >= 0")
        if np.any(u < 0):
            worst(-u, "U >= 0")
        prod = np.abs(u * re)
        if np.any(prod > 0):
            worst(prod, "U Re Q0 = 0")
        # gradient of Q0 by finite differences on the sample grid
        grad2 = _grad_squared(q0, sample_box, spec.dimension)
        a_grad, b_grad = _fit_bound(grad2, np.abs(q0) ** 2)
        a_U, b_U = _fit_bound(u ** 2, np.abs(q0.imag) ** 2)
        measured.update(a_grad_hat=a_grad, b_grad_hat=b_grad, a_U_hat=a_U, b_U_hat=b_U)
        if declared.a_grad is not None and declared.b_grad is not None:
            excess = grad2 - declared.a_grad - declared.b_grad * np.abs(q0) ** 2
            if np.any(excess > 1e-9 * (1 + grad2)):
                worst(excess, "|grad Q0|^2 <= a_grad + b_grad |Q0|^2 (declared)")
        if declared.a_U is not None and declared.b_U is not None:
            excess = u ** 2 - declared.a_U - declared.b_U * q0.imag ** 2
            if np.any(excess > 1e-9 * (1 + u ** 2)):
                worst(excess, "U^2 <= a_U + b_U |Im Q0|^2 (declared)")
        if b_U >= 1.0:
            violations.append(("b_U < 1", None, b_U))
        measured["theta_hat"] = sectoriality_angle(spec, pts)["theta"]
        measured["c0_hat"] = float(np.min(re))
    return AssumptionReport(case, not violations, measured, violations)


def _grad_squared(q0: np.ndarray, box: SampleBox, dimension: int) -> np.ndarray:
    if dimension == 1:
        return np.abs(np.gradient(q0, box.spacing)) ** 2
    shaped = q0.reshape((box.n,) * dimension)
    parts = np.gradient(shaped, box.spacing)
    return sum(np.abs(p) ** 2 for p in parts).ravel()


# ---------------------------------------------------------------------------
# enclosure regions

REGION_KINDS = ("sector_R", "hyperbolic_Rtilde", "uniform_sector_S", "left_halfplane")


@dataclass(frozen=True)
class PlaneRegion:
    kind: str
    params: dict

    def contains(self, lam: complex) -> bool:
        return bool(_member(self, np.asarray(lam, dtype=complex)))

    def contains_many(self, lams) -> np.ndarray:
        return _member(self, np.asarray(lams, dtype=complex))


def enclosure_region(kind: str, **params) -> PlaneRegion:
    """Resolvent-set region of the given ``kind``.

    ``sector_R``: ``b_prime``, ``a`` (=a_{W-U}), ``m_tr``.
    ``hyperbolic_Rtilde``: ``b_prime``, ``a_tilde``.
    ``uniform_sector_S``: ``mu0``, ``theta0``.
    ``left_halfplane``: ``c`` (the region ``Re lambda < c``).
    """
    if kind not in REGION_KINDS:
        raise InvalidParameter(f"unknown region kind {kind!r}")
    if kind in ("sector_R", "hyperbolic_Rtilde"):
        b = float(params.get("b_prime", math.nan))
        if not 0.0 < b < 1.0:
            raise InvalidParameter("b_prime must lie in (0, 1)")
        params["b_prime"] = b
    if kind == "sector_R":
        params.setdefault("a", 0.0)
        params.setdefault("m_tr", 0.0)
        if params["a"] < 0 or params["m_tr"] < 0:
            raise InvalidParameter("a and m_tr must be non-negative")
    elif kind == "hyperbolic_Rtilde":
        params.setdefault("a_tilde", 0.0)
        if params["a_tilde"] < 0:
            raise InvalidParameter("a_tilde must be non-negative")
    elif kind == "uniform_sector_S":
        theta0 = float(params.get("theta0", math.nan))
        if not 0.0 <= theta0 < math.pi / 2:
            raise InvalidParameter("theta0 must lie in [0, pi/2)")
        params["mu0"] = complex(params.get("mu0", 0.0))
    elif kind == "left_halfplane":
        params["c"] = float(params.get("c", 0.0))
    return PlaneRegion(kind, dict(params))


def _member(region: PlaneRegion, lam: np.ndarray) -> np.ndarray:
    p = region.params
    re, im = lam.real, lam.imag
    if region.kind == "sector_R":
        sb = math.sqrt(p["b_prime"])
        a, m2 = p["a"], p["m_tr"] ** 2
        return (re < -m2 - a / (1 - sb)) & (np.abs(im) < (1 - sb) / sb * np.abs(re + m2) - a / sb)
    if region.kind == "hyperbolic_Rtilde":
        b, at = p["b_prime"], p["a_tilde"]
        return (re < -math.sqrt((2 + b) / (1 - b) * at)) & (im ** 2 < (1 - b) / (2 + b) * re ** 2 - at)
    if region.kind == "uniform_sector_S":
        # complement of the closed sector |arg(z - mu0)| <= theta0
        z = lam - p["mu0"]
        return (z != 0) & (np.abs(np.angle(z)) > p["theta0"])
    return re < p["c"]


def resolvent_bound(region: PlaneRegion, lam: complex) -> float:
    """Explicit resolvent-norm bound at ``lam``; ``inf`` outside the region.

    Only ``sector_R`` carries a fully explicit bound; for the hyperbolic
    region the bound ``d(b')/|Re lambda|`` needs the user parameter ``d``
    (default 1), and the remaining kinds use the distance bound.
    """
    lam = complex(lam)
    if not region.contains(lam):
        return math.inf
    p = region.params
    if region.kind == "sector_R":
        sb = math.sqrt(p["b_prime"])
        denom = (1 - sb) * abs(lam.real + p["m_tr"] ** 2) - sb * abs(lam.imag) - p["a"]
        return math.inf if denom <= 0 else 1.0 / denom
    if region.kind == "hyperbolic_Rtilde":
        return p.get("d", 1.0) / abs(lam.real)
    if region.kind == "uniform_sector_S":
        z = lam - p["mu0"]
        ang = abs(math.atan2(z.imag, z.real)) - p["theta0"]
        dist = abs(z) * math.sin(min(ang, math.pi / 2))
        return 1.0 / dist
    return 1.0 / (p["c"] - lam.real)


def completeness_threshold(alpha: float) -> float:
    """Smallest exponent ``beta`` for which the eigensystem is complete.

    For the family ``-d^2/dx^2 + i|x|^beta sgn x - alpha |x|^beta``.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise OutOfRange("alpha must lie in [0, 1)")
    b = alpha * alpha
    if b == 0.0:
        vartheta = math.pi / 2
    else:
        sb = math.sqrt(b)
        vartheta = math.atan(max((1 - sb) / sb, math.sqrt((1 - b) / (2 + b))))
    return 2.0 * (math.pi / vartheta - 1.0)


# ---------------------------------------------------------------------------
# built-in potentials

BUILTIN_NAMES = (
    "ix",
    "ix3",
    "harmonic",
    "rotated_harmonic(1+3i)",
    "ix3_minus_x2",
    "shifted_complex_harmonic_delta",
    "ix3_alpha(0.5)",
)

_X = PiecewisePoly.monomial(1)


def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def builtin(name: str, dimension: int | None = None) -> PotentialSpec:
    """Named potentials used throughout the experiments.

    ``ix``, ``ix3``: ``Q = i x`` / ``i x^3`` (accretive case, U = 0).
    ``harmonic``: ``|x|^2`` in ``dimension`` (default 1).
    ``rotated_harmonic(c)``: ``c |x|^2`` in 2-D (exterior-domain example, c = 1+3i).
    ``ix3_minus_x2``: ``Q0 = i x^3``, ``U = x^2``.
    ``shifted_complex_harmonic_delta``: ``Q0 = (1+i) x^2 + 1``, ``W = i delta(x)``.
    ``ix3_alpha(a)``: ``Q0 = i sgn(x)|x|^3``, ``U = a |x|^3``.
    """
    key = name.strip()
    m = re.fullmatch(r"(\w+)\((.*)\)", key)
    base, arg = (m.group(1), m.group(2)) if m else (key, None)
    if base == "ix":
        return PotentialSpec(PiecewisePoly.monomial(1, 1j), name="ix")
    if base == "ix3":
        return PotentialSpec(PiecewisePoly.monomial(3, 1j), name="ix3")
    if base == "harmonic":
        d = dimension or 1
        prof = PiecewisePoly.monomial(2)
        q0 = prof if d == 1 else RadialFunction(prof, d)
        return PotentialSpec(q0, dimension=d, name="harmonic",
                             declared_bounds=DeclaredBounds(theta=0.0, shift=-1.0))
    if base == "rotated_harmonic":
        c = _parse_complex(arg) if arg else 1 + 3j
        d = dimension or 2
        prof = PiecewisePoly.monomial(2, c)
        q0 = prof if d == 1 else RadialFunction(prof, d)
        return PotentialSpec(q0, dimension=d, name=f"rotated_harmonic({arg or '1+3i'})",
                             declared_bounds=DeclaredBounds(shift=-1.0))
    if base == "ix3_minus_x2":
        return PotentialSpec(PiecewisePoly.monomial(3, 1j), u=PiecewisePoly.monomial(2),
                             name="ix3_minus_x2")
    if base == "shifted_complex_harmonic_delta":
        q0 = PiecewisePoly.monomial(2, 1 + 1j) + 1.0
        return PotentialSpec(q0, w_kind=DeltaW(0.0, 1j), name="shifted_complex_harmonic_delta",
                             declared_bounds=DeclaredBounds(theta=math.pi / 4, c0=1.0))
    if base == "ix3_alpha":
        alpha = float(arg) if arg else 0.5
        if not 0 <= alpha < 1:
            raise ConfigError("ix3_alpha needs alpha in [0, 1)")
        q0 = parse_expression("i*sgn(x)*abs(x)**3")
        u = parse_expression(f"{alpha!r}*abs(x)**3")
        return PotentialSpec(q0, u=u, name=f"ix3_alpha({alpha:g})",
                             declared_bounds=DeclaredBounds(a_U=0.0, b_U=alpha * alpha))
    raise ConfigError(f"unknown built-in potential {name!r}; known: {', '.join(BUILTIN_NAMES)}")


def from_expressions(q0: str, u: str | None = None, dimension: int = 1,
                     delta: Sequence | None = None, name: str = "custom") -> PotentialSpec:
    """Spec from polynomial expression strings (radial in ``r`` when ``dimension > 1``)."""
    q0p = parse_expression(q0)
    up = parse_expression(u) if u else None
    if up is not None and not up.is_real():
        raise ConfigError("U must be real-valued")
    if dimension > 1:
        q0p = RadialFunction(q0p, dimension)
        up = RadialFunction(up, dimension) if up is not None else None
    w = DeltaW(float(delta[0]), complex(delta[1])) if delta else None
    return PotentialSpec(q0p, u=up, w_kind=w, dimension=dimension, name=name)

