"""Adaptive integration of ``-f'' - (k/r) f' + (q + c/r**2) f = lam f``.

The state is carried as ``(value, derivative)`` divided by a positive factor
whose logarithm is accumulated separately, so solutions growing like
``exp(x**2/2)`` or faster never overflow.  Stepping uses the Dormand-Prince
5(4) embedded pair with local error measured against the renormalised state.

Potentials that are :class:`~spexact.polynomial.PiecewisePoly` are evaluated
inside a numba-compiled kernel; any other callable goes through the very same
kernel source executed as plain Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonFiniteCoefficient, NotRadial, StepSizeUnderflow
from .polynomial import PiecewisePoly

__all__ = ["OdeForm", "ScaledState", "integrate", "radial_series_start", "propagate"]

FORM_KINDS = ("cartesian", "radial2d", "radial3d")

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

OK, UNDERFLOW, NONFINITE, STEP_BUDGET = 0, 1, 2, 3
MAX_STEPS = 2_000_000


def _make_propagator(qeval, jit: bool):
    def coefficient(x, lam, qdata, kfirst, cent):
        p = qeval(x, qdata) - lam
        if cent != 0.0:
            p += cent / (x * x)
        return p

    if jit:
        coefficient = njit(cache=True, inline="always")(coefficient)

    def propagate(xs, f0, g0, ls0, lams, qdata, kfirst, cent, tol):
        m = lams.shape[0]
        nx = xs.shape[0]
        F = np.empty((m, nx), dtype=np.complex128)
        G = np.empty((m, nx), dtype=np.complex128)
        LS = np.empty((m, nx), dtype=np.float64)
        status = np.zeros(m, dtype=np.int64)
        where = np.zeros(m, dtype=np.float64)
        total = xs[nx - 1] - xs[0]
        direction = 1.0 if total >= 0 else -1.0
        for i in range(m):
            lam = lams[i]
            f = f0[i]
            g = g0[i]
            ls = ls0[i]
            F[i, 0] = f
            G[i, 0] = g
            LS[i, 0] = ls
            x = xs[0]
            p = coefficient(x, lam, qdata, kfirst, cent)
            if not (math.isfinite(p.real) and math.isfinite(p.imag)):
                status[i] = NONFINITE
                where[i] = x
                continue
            kf1 = g
            kg1 = p * f
            if kfirst != 0:
                kg1 -= kfirst / x * g
            h = direction * min(abs(total) + 1e-300, 0.05 / (1.0 + math.sqrt(abs(p))))
            if x != 0.0 and (kfirst != 0 or cent != 0.0):
                h = direction * min(abs(h), 0.05 * abs(x))
            nsteps = 0
            failed = False
            for j in range(1, nx):
                target = xs[j]
                while direction * (target - x) > 0.0:
                    nsteps += 1
                    if nsteps > MAX_STEPS:
                        status[i] = STEP_BUDGET
                        where[i] = x
                        failed = True
                        break
                    hs = h
                    last = False
                    if direction * (x + hs - target) >= 0.0:
                        hs = target - x
                        last = True
                    # stages
                    x2 = x + _C2 * hs
                    f2 = f + hs * (_A21 * kf1)
                    g2 = g + hs * (_A21 * kg1)
                    p2 = coefficient(x2, lam, qdata, kfirst, cent)
                    kf2 = g2
                    kg2 = p2 * f2 - (kfirst / x2) * g2 if kfirst != 0 else p2 * f2
                    x3 = x + _C3 * hs
                    f3 = f + hs * (_A31 * kf1 + _A32 * kf2)
                    g3 = g + hs * (_A31 * kg1 + _A32 * kg2)
                    p3 = coefficient(x3, lam, qdata, kfirst, cent)
                    kf3 = g3
                    kg3 = p3 * f3 - (kfirst / x3) * g3 if kfirst != 0 else p3 * f3
                    x4 = x + _C4 * hs
                    f4 = f + hs * (_A41 * kf1 + _A42 * kf2 + _A43 * kf3)
                    g4 = g + hs * (_A41 * kg1 + _A42 * kg2 + _A43 * kg3)
                    p4 = coefficient(x4, lam, qdata, kfirst, cent)
                    kf4 = g4
                    kg4 = p4 * f4 - (kfirst / x4) * g4 if kfirst != 0 else p4 * f4
                    x5 = x + _C5 * hs
                    f5 = f + hs * (_A51 * kf1 + _A52 * kf2 + _A53 * kf3 + _A54 * kf4)
                    g5 = g + hs * (_A51 * kg1 + _A52 * kg2 + _A53 * kg3 + _A54 * kg4)
                    p5 = coefficient(x5, lam, qdata, kfirst, cent)
                    kf5 = g5
                    kg5 = p5 * f5 - (kfirst / x5) * g5 if kfirst != 0 else p5 * f5
                    x6 = target if last else x + hs
                    f6 = f + hs * (_A61 * kf1 + _A62 * kf2 + _A63 * kf3 + _A64 * kf4 + _A65 * kf5)
                    g6 = g + hs * (_A61 * kg1 + _A62 * kg2 + _A63 * kg3 + _A64 * kg4 + _A65 * kg5)
                    p6 = coefficient(x6, lam, qdata, kfirst, cent)
                    kf6 = g6
                    kg6 = p6 * f6 - (kfirst / x6) * g6 if kfirst != 0 else p6 * f6
                    fn = f + hs * (_B1 * kf1 + _B3 * kf3 + _B4 * kf4 + _B5 * kf5 + _B6 * kf6)
                    gn = g + hs * (_B1 * kg1 + _B3 * kg3 + _B4 * kg4 + _B5 * kg5 + _B6 * kg6)
                    pn = p6
                    kf7 = gn
                    kg7 = pn * fn - (kfirst / x6) * gn if kfirst != 0 else pn * fn
                    ef = hs * (_E1 * kf1 + _E3 * kf3 + _E4 * kf4 + _E5 * kf5 + _E6 * kf6 + _E7 * kf7)
                    eg = hs * (_E1 * kg1 + _E3 * kg3 + _E4 * kg4 + _E5 * kg5 + _E6 * kg6 + _E7 * kg7)
                    if not (math.isfinite(pn.real) and math.isfinite(pn.imag)
                            and math.isfinite(p2.real) and math.isfinite(p2.imag)
                            and math.isfinite(p3.real) and math.isfinite(p3.imag)
                            and math.isfinite(p4.real) and math.isfinite(p4.imag)
                            and math.isfinite(p5.real) and math.isfinite(p5.imag)):
                        status[i] = NONFINITE
                        where[i] = x
                        failed = True
                        break
                    scale = max(abs(f), abs(g), abs(fn), abs(gn))
                    err = max(abs(ef), abs(eg)) / (tol * scale)
                    if not math.isfinite(err):
                        err = 1e10
                    if err <= 1.0:
                        x = x6
                        f = fn
                        g = gn
                        kf1 = kf7
                        kg1 = kg7
                        mag = max(abs(f), abs(g))
                        if mag > 2.0 or mag < 0.5:
                            f /= mag
                            g /= mag
                            kf1 /= mag
                            kg1 /= mag
                            ls += math.log(mag)
                        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                        if not last:
                            h = hs * fac
                        elif fac < 1.0:
                            h = h * fac
                    else:
                        h = hs * max(0.1, 0.9 * err ** -0.2)
                        if abs(h) < 1e-13 * max(1.0, abs(x)):
                            status[i] = UNDERFLOW
                            where[i] = x
                            failed = True
                            break
                if failed:
                    break
                F[i, j] = f
                G[i, j] = g
                LS[i, j] = ls
        return F, G, LS, status, where

    return njit(cache=True)(propagate) if jit else propagate


@njit(cache=True)
def _ppoly_eval(x, data):
    breaks, coeffs = data
    k = np.searchsorted(breaks, x, side="right")
    acc = 0j
    for j in range(coeffs.shape[1] - 1, -1, -1):
        acc = acc * x + coeffs[k, j]
    return acc


def _callable_eval(x, fn):
    return complex(fn(x))


_propagate_poly = _make_propagator(_ppoly_eval, jit=True)
_propagate_callable = _make_propagator(_callable_eval, jit=False)


@dataclass(frozen=True)
class ScaledState:
    """State ``exp(log_scale) * (value, derivative)``."""

    value: complex
    derivative: complex
    log_scale: float = 0.0

    @classmethod
    def of(cls, value: complex, derivative: complex, log_scale: float = 0.0) -> "ScaledState":
        """Build a state with ``max(|value|, |derivative|) == 1``."""
        mag = max(abs(value), abs(derivative))
        if mag == 0.0:
            raise ValueError("zero initial data")
        return cls(complex(value) / mag, complex(derivative) / mag, log_scale + math.log(mag))

    def normalized(self) -> "ScaledState":
        return ScaledState.of(self.value, self.derivative, self.log_scale)

    def true_value(self) -> complex:
        return cmath_exp_real(self.log_scale) * self.value

    def true_derivative(self) -> complex:
        return cmath_exp_real(self.log_scale) * self.derivative


def cmath_exp_real(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True)
class OdeForm:
    """Differential expression of one truncated eigenproblem.

    ``kind`` is ``"cartesian"`` (``-f'' + q f``), ``"radial2d"``
    (``-f'' - f'/r + (q + l**2/r**2) f``) or ``"radial3d"``
    (``-g'' - 2g'/r + (q + l(l+1)/r**2) g``).  ``potential`` is a
    one-dimensional :class:`~spexact.potentials.PotentialSpec` (the radial
    profile for radial kinds).
    """

    kind: str
    potential: object
    l: int = 0

    def __post_init__(self):
        if self.kind not in FORM_KINDS:
            raise ValueError(f"unknown form kind {self.kind!r}")
        if self.l < 0 or int(self.l) != self.l:
            raise ValueError("angular index must be a non-negative integer")
        if getattr(self.potential, "dimension", 1) != 1:
            raise ValueError("OdeForm needs the one-dimensional restriction of the potential")

    @property
    def radial(self) -> bool:
        return self.kind != "cartesian"

    @property
    def first_order_coefficient(self) -> int:
        return {"cartesian": 0, "radial2d": 1, "radial3d": 2}[self.kind]

    @property
    def centrifugal(self) -> float:
        if self.kind == "radial2d":
            return float(self.l * self.l)
        if self.kind == "radial3d":
            return float(self.l * (self.l + 1))
        return 0.0

    def profile(self):
        return self.potential.profile()

    def with_l(self, l: int) -> "OdeForm":
        return OdeForm(self.kind, self.potential, l)


def propagate(form: OdeForm, lams, xs, f0, g0, ls0, tol: float, *, raise_errors: bool = True):
    """Integrate a batch of initial states through the output points ``xs``.

    Returns arrays ``(F, G, LS)`` of shape ``(len(lams), len(xs))`` and the
    per-lambda status codes.
    """
    lams = np.ascontiguousarray(np.atleast_1d(np.asarray(lams, dtype=complex)))
    m = lams.size
    xs = np.ascontiguousarray(np.asarray(xs, dtype=float))
    f0 = np.ascontiguousarray(np.broadcast_to(np.asarray(f0, dtype=complex), (m,)))
    g0 = np.ascontiguousarray(np.broadcast_to(np.asarray(g0, dtype=complex), (m,)))
    ls0 = np.ascontiguousarray(np.broadcast_to(np.asarray(ls0, dtype=float), (m,)))
    if not tol > 0:
        raise ValueError("tol must be positive")
    if form.radial and np.any(xs <= 0.0):
        raise NotRadial("radial integration must stay in r > 0")
    prof = form.profile()
    kfirst = form.first_order_coefficient
    cent = form.centrifugal
    if isinstance(prof, PiecewisePoly):
        out = _propagate_poly(xs, f0, g0, ls0, lams, (prof.breaks, prof.coeffs), kfirst, cent, float(tol))
    else:
        out = _propagate_callable(xs, f0, g0, ls0, lams, prof, kfirst, cent, float(tol))
    F, G, LS, status, where = out
    if raise_errors:
        _raise_status(status, where)
    return F, G, LS, status


def _raise_status(status, where):
    bad = np.flatnonzero(status)
    if bad.size == 0:
        return
    code, x = int(status[bad[0]]), float(where[bad[0]])
    if code == NONFINITE:
        raise NonFiniteCoefficient(x)
    raise StepSizeUnderflow(x)


def integrate(form: OdeForm, lam: complex, x_from: float, x_to: float, init: ScaledState,
              tol: float = 1e-10) -> ScaledState:
    """State at ``x_to`` of the solution with data ``init`` at ``x_from``."""
    init = init.normalized()
    F, G, LS, _ = propagate(form, [lam], [x_from, x_to], init.value, init.derivative, init.log_scale, tol)
    return ScaledState(complex(F[0, -1]), complex(G[0, -1]), float(LS[0, -1]))


def series_coefficient(form: OdeForm, lam):
    """Coefficient ``c2`` of ``r**l (1 + c2 r**2 + ...)`` for the regular branch."""
    q_origin = complex(form.profile()(0.0))
    if form.kind == "radial3d":
        return (q_origin - lam) / (4 * form.l + 6)
    return (q_origin - lam) / (4 * form.l + 4)


def radial_series_start(form: OdeForm, lam: complex, r0: float = 1e-3) -> ScaledState:
    """Regular solution ``r**l (1 + c2 r**2)`` and its derivative at ``r0``."""
    if not form.radial:
        raise NotRadial("series start is only defined for radial forms")
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    value, deriv, log_scale = _series_values(form, np.atleast_1d(lam), r0)
    return ScaledState(complex(value[0]), complex(deriv[0]), float(log_scale[0]))


def _series_values(form: OdeForm, lams: np.ndarray, r0: float):
    """Vectorised series start; the common factor ``r0**(l-1)`` goes to the log scale."""
    l = form.l
    c2 = series_coefficient(form, np.asarray(lams, dtype=complex))
    # g = r^l (1 + c2 r^2),  g' = r^(l-1) (l + (l+2) c2 r^2)
    value = r0 * (1 + c2 * r0 * r0)
    deriv = l + (l + 2) * c2 * r0 * r0
    if l == 0:
        value, deriv = 1 + c2 * r0 * r0, 2 * c2 * r0
        log_scale = np.zeros(np.shape(value))
    else:
        log_scale = np.full(np.shape(value), (l - 1) * math.log(r0))
    mag = np.maximum(np.abs(value), np.abs(deriv))
    return value / mag, deriv / mag, log_scale + np.log(mag)
