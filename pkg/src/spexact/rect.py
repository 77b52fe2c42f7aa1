"""Axis-aligned rectangles in the complex plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter

__all__ = ["Rect"]


@dataclass(frozen=True)
class Rect:
    """``[re_lo, re_hi] x [im_lo, im_hi]``, counter-clockwise boundary."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        vals = (self.re_lo, self.re_hi, self.im_lo, self.im_hi)
        if not all(np.isfinite(vals)):
            raise InvalidParameter("rectangle bounds must be finite")
        if not (self.re_hi > self.re_lo and self.im_hi > self.im_lo):
            raise InvalidParameter(f"empty rectangle {vals}")

    @classmethod
    def parse(cls, text: str) -> "Rect":
        """``"re_lo,re_hi,im_lo,im_hi"``."""
        try:
            parts = [float(p) for p in text.split(",")]
        except ValueError:
            raise InvalidParameter(f"cannot parse rectangle {text!r}") from None
        if len(parts) != 4:
            raise InvalidParameter("rectangle needs four comma-separated numbers")
        return cls(*parts)

    @property
    def corners(self) -> tuple[complex, complex, complex, complex]:
        return (complex(self.re_lo, self.im_lo), complex(self.re_hi, self.im_lo),
                complex(self.re_hi, self.im_hi), complex(self.re_lo, self.im_hi))

    @property
    def width(self) -> float:
        return self.re_hi - self.re_lo

    @property
    def height(self) -> float:
        return self.im_hi - self.im_lo

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z) -> np.ndarray | bool:
        z = np.asarray(z, dtype=complex)
        out = ((z.real >= self.re_lo) & (z.real <= self.re_hi)
               & (z.imag >= self.im_lo) & (z.imag <= self.im_hi))
        return bool(out) if out.ndim == 0 else out

    def expanded(self, margin: float) -> "Rect":
        return Rect(self.re_lo - margin, self.re_hi + margin, self.im_lo - margin, self.im_hi + margin)

    def shifted(self, c: complex) -> "Rect":
        c = complex(c)
        return Rect(self.re_lo + c.real, self.re_hi + c.real, self.im_lo + c.imag, self.im_hi + c.imag)

    def split(self, fraction: float = 0.5) -> tuple["Rect", "Rect"]:
        """Cut across the longer side at ``fraction`` of its length."""
        if self.width >= self.height:
            cut = self.re_lo + fraction * self.width
            return (Rect(self.re_lo, cut, self.im_lo, self.im_hi),
                    Rect(cut, self.re_hi, self.im_lo, self.im_hi))
        cut = self.im_lo + fraction * self.height
        return (Rect(self.re_lo, self.re_hi, self.im_lo, cut),
                Rect(self.re_lo, self.re_hi, cut, self.im_hi))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.re_lo, self.re_hi, self.im_lo, self.im_hi)
