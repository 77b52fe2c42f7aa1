"""Piecewise polynomials with complex coefficients and a tiny expression parser.

Potentials coming from config files are polynomials in ``x`` (or ``r``),
optionally combined with ``abs(x)`` and ``sgn(x)``.  Both of those are
polynomial on each side of the origin, so every such expression is a
piecewise polynomial with at most one break point at 0.  Keeping the
coefficients around (rather than an opaque callable) lets the ODE kernel
evaluate the potential in compiled code.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["PiecewisePoly", "parse_expression", "RadialFunction"]


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    n = c.shape[-1]
    while n > 1 and np.all(c[..., n - 1] == 0):
        n -= 1
    return c[..., :n]


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """``sum_k coeffs[p, k] * x**k`` on piece ``p``.

    Piece ``p`` covers ``breaks[p-1] <= x < breaks[p]`` (open-ended at both
    extremes).  Coefficients are in ascending powers of the global variable.
    """

    breaks: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        breaks = np.ascontiguousarray(np.atleast_1d(np.asarray(self.breaks, dtype=float)))
        coeffs = np.ascontiguousarray(np.atleast_2d(np.asarray(self.coeffs, dtype=complex)))
        if coeffs.shape[0] != breaks.size + 1:
            raise ValueError("need len(breaks) + 1 coefficient rows")
        if np.any(np.diff(breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def constant(cls, value: complex) -> "PiecewisePoly":
        return cls(np.zeros(0), np.array([[value]], dtype=complex))

    @classmethod
    def monomial(cls, power: int, coefficient: complex = 1.0) -> "PiecewisePoly":
        c = np.zeros(power + 1, dtype=complex)
        c[power] = coefficient
        return cls(np.zeros(0), c[None, :])

    @classmethod
    def split(cls, left, right) -> "PiecewisePoly":
        """Different polynomials for ``x < 0`` and ``x >= 0``."""
        left = np.asarray(left, dtype=complex)
        right = np.asarray(right, dtype=complex)
        n = max(left.size, right.size)
        c = np.zeros((2, n), dtype=complex)
        c[0, : left.size] = left
        c[1, : right.size] = right
        return cls(np.array([0.0]), c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def _on(self, breaks: np.ndarray) -> np.ndarray:
        """Coefficient rows re-expressed on a refined break set."""
        if breaks.size == 0:
            mids = np.zeros(1)
        else:
            mids = np.concatenate(([breaks[0] - 1.0], 0.5 * (breaks[1:] + breaks[:-1]), [breaks[-1] + 1.0]))
        idx = np.searchsorted(self.breaks, mids, side="right")
        return self.coeffs[idx]

    def _binary(self, other: "PiecewisePoly", op) -> "PiecewisePoly":
        breaks = np.union1d(self.breaks, other.breaks)
        a = self._on(breaks)
        b = other._on(breaks)
        rows = [op(ra, rb) for ra, rb in zip(a, b)]
        n = max(r.size for r in rows)
        out = np.zeros((len(rows), n), dtype=complex)
        for i, r in enumerate(rows):
            out[i, : r.size] = r
        return PiecewisePoly(breaks, _trim(out)).simplified()

    def simplified(self) -> "PiecewisePoly":
        """Drop break points across which the polynomial does not change."""
        keep = [0]
        for p in range(1, self.coeffs.shape[0]):
            if not np.array_equal(self.coeffs[p], self.coeffs[keep[-1]]):
                keep.append(p)
        if len(keep) == self.coeffs.shape[0]:
            return self
        breaks = np.array([self.breaks[p - 1] for p in keep[1:]], dtype=float)
        return PiecewisePoly(breaks, self.coeffs[keep])

    @staticmethod
    def _coerce(other) -> "PiecewisePoly":
        if isinstance(other, PiecewisePoly):
            return other
        if np.isscalar(other):
            return PiecewisePoly.constant(complex(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._binary(other, lambda a, b: np.polynomial.polynomial.polyadd(a, b))

    __radd__ = __add__

    def __neg__(self):
        return PiecewisePoly(self.breaks, -self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._binary(other, lambda a, b: np.polynomial.polynomial.polymul(a, b))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are polynomial")
        out = PiecewisePoly.constant(1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, x, side="right")
        c = self.coeffs[idx]
        acc = np.zeros(x.shape, dtype=complex)
        for k in range(c.shape[-1] - 1, -1, -1):
            acc = acc * x + c[..., k]
        return acc if acc.ndim else complex(acc)

    def derivative(self) -> "PiecewisePoly":
        if self.degree == 0:
            return PiecewisePoly(self.breaks, np.zeros_like(self.coeffs))
        k = np.arange(1, self.degree + 1)
        return PiecewisePoly(self.breaks, self.coeffs[:, 1:] * k)

    def is_real(self) -> bool:
        return bool(np.all(self.coeffs.imag == 0))

    def __repr__(self):
        return f"PiecewisePoly(breaks={self.breaks.tolist()}, coeffs={self.coeffs.tolist()})"


class RadialFunction:
    """Evaluator ``x -> profile(|x|)`` on points of shape ``(m, d)``."""

    def __init__(self, profile, dimension: int):
        self.profile = profile
        self.dimension = dimension

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dimension == 1:
            return self.profile(np.abs(x))
        return self.profile(np.linalg.norm(x, axis=-1))


_X = PiecewisePoly.monomial(1)
_ABS = PiecewisePoly.split([0, -1], [0, 1])
_SGN = PiecewisePoly.split([-1], [1])


def parse_expression(text: str, variable: str = "x") -> PiecewisePoly:
    """Parse e.g. ``"(1+3j)*x**2 + 1j*sgn(x)*abs(x)**3"`` into a :class:`PiecewisePoly`.

    Both ``x`` and ``r`` are accepted as the variable name, ``i``/``I`` as the
    imaginary unit, and ``^`` as a power operator.
    """
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse potential expression {text!r}: {exc}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return PiecewisePoly.constant(node.value)
        if isinstance(node, ast.Name):
            if node.id in (variable, "x", "r"):
                return _X
            if node.id in ("i", "I", "j"):
                return PiecewisePoly.constant(1j)
            raise ConfigError(f"unknown name {node.id!r} in potential expression")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exponent = ev(node.right)
                if exponent.degree != 0 or exponent.breaks.size:
                    raise ConfigError("exponent must be a constant")
                e = exponent.coeffs[0, 0]
                if e.imag != 0 or e.real < 0 or e.real != int(e.real):
                    raise ConfigError("only non-negative integer exponents are supported")
                return ev(node.left) ** int(e.real)
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                if b.degree != 0 or b.breaks.size:
                    raise ConfigError("division only by constants")
                return a * (1.0 / b.coeffs[0, 0])
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1:
            arg = ev(node.args[0])
            if arg is not _X and not (arg.breaks.size == 0 and np.array_equal(arg.coeffs, _X.coeffs)):
                raise ConfigError(f"{node.func.id}() only accepts the bare variable")
            if node.func.id == "abs":
                return _ABS
            if node.func.id in ("sgn", "sign"):
                return _SGN
            raise ConfigError(f"unknown function {node.func.id!r}")
        raise ConfigError(f"unsupported syntax in potential expression: {ast.dump(node)}")

    return ev(tree)
