"""Finite-difference backend: tridiagonal discretisations, eigenvalues and pseudospectra.

Everything runs on tridiagonal LU factorisations with partial pivoting
(the LAPACK ``gttrf`` scheme), so a determinant, a shifted solve or an
adjoint solve costs O(n).  Eigenvalues are counted by the phase winding of
``det(A - lambda)`` and polished by Rayleigh quotient iteration; the
smallest singular value comes from inverse power iteration on
``(A - lambda)^* (A - lambda)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import config as numba_config, njit, prange
from scipy.spatial import cKDTree

from .contour import PhaseSampler, locate_zeros, winding_number, with_perturbation
from .errors import (EmptySet, InvalidParameter, IterationCapExceeded, MeshTooCoarse,
                     PivotBreakdown, SiteOffMesh)
from .io import atomic_write_text, format_float
from .polynomial import PiecewisePoly
from .rect import Rect
from .shooting import TruncatedProblem

# the bundled TBB is often too old for numba; skip it instead of warning
numba_config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__all__ = [
    "BandedOperator",
    "PseudospectrumGrid",
    "discretize",
    "eigs_in_rect",
    "resolvent_norm",
    "smallest_singular_value",
    "pseudospectrum",
    "attouch_wets",
]

SMIN_RTOL = 1e-8
SMIN_MAX_ITER = 500


# ---------------------------------------------------------------------------
# tridiagonal kernels


@njit(cache=True)
def _gttrf(dl, d, du):
    """In-place LU of a tridiagonal matrix; returns ``(du2, ipiv, info)``."""
    n = d.shape[0]
    du2 = np.zeros(max(n - 2, 0), dtype=np.complex128)
    ipiv = np.arange(n)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] != 0:
                fact = dl[i] / d[i]
                dl[i] = fact
                d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            temp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = temp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            ipiv[i] = i + 1
    info = 0
    for i in range(n):
        if d[i] == 0:
            info = i + 1
            break
    return du2, ipiv, info


@njit(cache=True)
def _gttrs(dl, d, du, du2, ipiv, b):
    """Solve ``A x = b`` in place from the factors."""
    n = d.shape[0]
    for i in range(n - 1):
        if ipiv[i] == i:
            b[i + 1] -= dl[i] * b[i]
        else:
            temp = b[i]
            b[i] = b[i + 1]
            b[i + 1] = temp - dl[i] * b[i]
    b[n - 1] /= d[n - 1]
    if n > 1:
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i]


@njit(cache=True)
def _gttrs_adjoint(dl, d, du, du2, ipiv, b):
    """Solve ``A^* x = b`` in place from the factors of ``A``."""
    n = d.shape[0]
    b[0] /= np.conj(d[0])
    if n > 1:
        b[1] = (b[1] - np.conj(du[0]) * b[0]) / np.conj(d[1])
    for i in range(2, n):
        b[i] = (b[i] - np.conj(du[i - 1]) * b[i - 1] - np.conj(du2[i - 2]) * b[i - 2]) / np.conj(d[i])
    for i in range(n - 2, -1, -1):
        if ipiv[i] == i:
            b[i] -= np.conj(dl[i]) * b[i + 1]
        else:
            temp = b[i + 1]
            b[i + 1] = b[i] - np.conj(dl[i]) * temp
            b[i] = temp


@njit(cache=True)
def _logdet_batch(sub, diag, sup, lams):
    """``log det(A - lam)`` (real part exact, imaginary part mod 2 pi); ``-inf`` on breakdown."""
    m = lams.shape[0]
    out = np.empty(m, dtype=np.complex128)
    for k in range(m):
        dl = sub.copy()
        d = diag - lams[k]
        du = sup.copy()
        du2, ipiv, info = _gttrf(dl, d, du)
        if info != 0:
            out[k] = complex(-np.inf, 0.0)
            continue
        acc = 0.0
        phase = 0.0
        for i in range(d.shape[0]):
            acc += math.log(abs(d[i]))
            phase += math.atan2(d[i].imag, d[i].real)
            if ipiv[i] != i:
                phase += math.pi
        phase = (phase + math.pi) % (2 * math.pi) - math.pi
        out[k] = complex(acc, phase)
    return out


@njit(cache=True)
def _smin_one(sub, diag, sup, lam, x0, rtol, max_iter):
    """``(smin, iterations, status)``; status 0 ok, 1 breakdown, 2 cap reached."""
    dl = sub.copy()
    d = diag - lam
    du = sup.copy()
    du2, ipiv, info = _gttrf(dl, d, du)
    if info != 0:
        return 0.0, 0, 1
    x = x0.copy()
    est = math.inf
    for it in range(1, max_iter + 1):
        _gttrs_adjoint(dl, d, du, du2, ipiv, x)
        _gttrs(dl, d, du, du2, ipiv, x)
        nrm = math.sqrt(np.sum(x.real ** 2 + x.imag ** 2))
        if not math.isfinite(nrm) or nrm == 0.0:
            return 0.0, it, 1
        x /= nrm
        new = 1.0 / math.sqrt(nrm)
        if abs(new - est) <= rtol * new:
            return new, it, 0
        est = new
    return est, max_iter, 2


@njit(cache=True, parallel=True)
def _smin_grid(sub, diag, sup, lams, x0, rtol, max_iter):
    m = lams.shape[0]
    vals = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    for k in prange(m):
        v, _, st = _smin_one(sub, diag, sup, lams[k], x0, rtol, max_iter)
        vals[k] = v
        status[k] = st
    return vals, status


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class BandedOperator:
    """Tridiagonal complex matrix with mesh metadata.

    ``sub[i]`` is entry ``(i+1, i)``, ``sup[i]`` entry ``(i, i+1)``.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    h: float
    nodes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("sub", "diag", "sup"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=complex))
        n = self.diag.size
        if self.sub.size != max(n - 1, 0) or self.sup.size != max(n - 1, 0):
            raise InvalidParameter("band lengths inconsistent with n")
        if not self.h > 0:
            raise InvalidParameter("mesh width must be positive")
        for name in ("sub", "diag", "sup"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_diagonal(cls, diag) -> "BandedOperator":
        diag = np.asarray(diag, dtype=complex)
        z = np.zeros(max(diag.size - 1, 0), dtype=complex)
        return cls(z, diag, z.copy(), 1.0)

    @property
    def n(self) -> int:
        return self.diag.size

    def shifted(self, c: complex) -> "BandedOperator":
        return BandedOperator(self.sub, self.diag + c, self.sup, self.h, self.nodes, dict(self.meta))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        y = self.diag * x
        y[1:] += self.sub * x[:-1]
        y[:-1] += self.sup * x[1:]
        return y

    def logdet(self, lams) -> np.ndarray:
        """``log det(A - lam)`` for each ``lam`` (imaginary part wrapped to ``(-pi, pi]``)."""
        lams = np.ascontiguousarray(np.atleast_1d(np.asarray(lams, dtype=complex)))
        return _logdet_batch(self.sub, self.diag, self.sup, lams)

    def solve(self, lam: complex, b) -> np.ndarray:
        dl, d, du = self.sub.copy(), self.diag - lam, self.sup.copy()
        du2, ipiv, info = _gttrf(dl, d, du)
        if info:
            raise PivotBreakdown(f"A - lambda is singular at lambda = {lam}")
        x = np.array(b, dtype=complex)
        _gttrs(dl, d, du, du2, ipiv, x)
        return x


def _mesh(p: TruncatedProblem, n: int):
    """Nodes, spacing and which ends carry a Robin row."""
    lo, hi = p.interval
    left_robin = p.left_bc.kind == "robin"
    right_robin = p.right_bc.kind == "robin"
    if p.left_bc.kind == "regular_origin":
        # offset mesh r_i = (i - 1/2) h
        h = hi / (n - 0.5) if right_robin else hi / (n + 0.5)
        nodes = (np.arange(1, n + 1) - 0.5) * h
        return nodes, h, False, right_robin
    gaps = n + 1 - int(left_robin) - int(right_robin)
    h = (hi - lo) / gaps
    first = lo if left_robin else lo + h
    nodes = first + h * np.arange(n)
    return nodes, h, left_robin, right_robin


def discretize(p: TruncatedProblem, n: int) -> BandedOperator:
    """Second-order central differences for ``p`` with ``n`` unknowns."""
    if n < 16:
        raise MeshTooCoarse("need at least 16 unknowns")
    nodes, h, left_robin, right_robin = _mesh(p, n)
    form = p.form
    prof = form.profile()
    if isinstance(prof, PiecewisePoly):
        q = np.asarray(prof(nodes), dtype=complex)
    else:
        q = np.array([complex(prof(x)) for x in nodes])
    inv = 1.0 / (h * h)
    diag = 2.0 * inv + q
    if form.centrifugal:
        diag = diag + form.centrifugal / nodes ** 2
    sub = np.full(n - 1, -inv, dtype=complex)
    sup = np.full(n - 1, -inv, dtype=complex)
    k = form.first_order_coefficient
    if k:
        c = k / (2.0 * h * nodes)
        sup -= c[:-1]  # -(k/r) f' -> -(k/r)(f_{i+1} - f_{i-1}) / 2h
        sub += c[1:]
    if p.left_bc.kind == "regular_origin" and k == 2:
        # ghost value f(-h/2) = (-1)^l f(h/2) folds into the first diagonal entry
        diag[0] += (-1) ** form.l * (-inv + k / (2.0 * h * nodes[0]))
    if left_robin:
        a = complex(p.left_bc.a)
        diag[0] += 2.0 * h * a * inv - (k / nodes[0] * a if k else 0.0)
        sup[0] = -2.0 * inv
    if right_robin:
        a = complex(p.right_bc.a)
        diag[-1] += 2.0 * h * a * inv + (k / nodes[-1] * a if k else 0.0)
        sub[-1] = -2.0 * inv
    for site, coupling in p.interfaces:
        j = int(np.argmin(np.abs(nodes - site)))
        if abs(nodes[j] - site) > 0.5 * h * (1 + 1e-9):
            raise SiteOffMesh(f"interface at {site} is farther than h/2 from every node")
        diag[j] += coupling / h
    meta = {"interval": list(p.interval), "left_bc": p.left_bc.to_dict(), "right_bc": p.right_bc.to_dict(),
            "form": form.kind, "l": form.l, "n": n}
    return BandedOperator(sub, diag, sup, h, nodes, meta)


# ---------------------------------------------------------------------------
# eigenvalues


def _rqi(A: BandedOperator, box: Rect, tol: float, rng: np.random.Generator, max_iter: int = 50):
    """Rayleigh quotient iteration started at the box centre; ``None`` if it leaves the box."""
    sigma = box.center
    x = rng.standard_normal(A.n) + 1j * rng.standard_normal(A.n)
    x /= np.linalg.norm(x)
    limit = box.expanded(0.5 * box.diameter)
    scale = max(1.0, float(np.max(np.abs(A.diag))))
    for it in range(max_iter):
        dl, d, du = A.sub.copy(), A.diag - sigma, A.sup.copy()
        du2, ipiv, info = _gttrf(dl, d, du)
        if info:
            return complex(sigma), 0.0
        _gttrs(dl, d, du, du2, ipiv, x)
        x /= np.linalg.norm(x)
        ax = A.matvec(x)
        lam = complex(np.vdot(x, ax))
        res = float(np.linalg.norm(ax - lam * x))
        if not limit.contains(lam):
            return None
        if it >= 2:
            # shift only once the vector has settled on the eigenvalue inside the box
            sigma = lam
        if res <= 1e-12 * scale or (res <= tol and it >= 3):
            return lam, res / scale
    return None


def eigs_in_rect(A: BandedOperator, rect: Rect, tol: float = 1e-10, *, clearance: float = 1e-3,
                 perturb: bool = True, seed: int = 0) -> list[tuple[complex, int]]:
    """Eigenvalues of ``A`` in ``rect`` with multiplicities, sorted by ``(Re, Im)``."""
    sampler = PhaseSampler(A.logdet)
    rng = np.random.default_rng(seed)

    def run(r):
        return locate_zeros(sampler, r, lambda box: _rqi(A, box, tol, rng), tol=tol, clearance=clearance)

    zeros = with_perturbation(run, rect)[0] if perturb else run(rect)
    return [(complex(z), int(m)) for z, m, _ in zeros]


def count_in_rect(A: BandedOperator, rect: Rect, *, clearance: float = 1e-3) -> int:
    return winding_number(PhaseSampler(A.logdet), rect, clearance=clearance)


# ---------------------------------------------------------------------------
# resolvent norms and pseudospectra


def _start_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return x / np.linalg.norm(x)


def smallest_singular_value(A: BandedOperator, lam: complex, *, seed: int = 0,
                            rtol: float = SMIN_RTOL, max_iter: int = SMIN_MAX_ITER) -> float:
    """``smin(A - lam)``; 0 on pivot breakdown."""
    v, it, status = _smin_one(A.sub, A.diag, A.sup, complex(lam), _start_vector(A.n, seed), rtol, max_iter)
    if status == 2:
        raise IterationCapExceeded(v, it)
    return float(v)


def resolvent_norm(A: BandedOperator, lam: complex, *, seed: int = 0) -> float:
    """``||(A - lam)^{-1}||`` in the Euclidean norm; ``inf`` when ``lam`` is an eigenvalue."""
    s = smallest_singular_value(A, lam, seed=seed)
    return math.inf if s == 0.0 else 1.0 / s


@dataclass
class PseudospectrumGrid:
    """``smin(A - lambda)`` on a uniform grid; ``values[j, i]`` sits at ``re[i] + 1j*im[j]``."""

    rect: Rect
    nx: int
    ny: int
    values: np.ndarray
    eps_levels: list
    meta: dict = field(default_factory=dict)

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.rect.re_lo, self.rect.re_hi, self.nx)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.rect.im_lo, self.rect.im_hi, self.ny)

    @property
    def points(self) -> np.ndarray:
        return (self.re[None, :] + 1j * self.im[:, None]).ravel()

    def mask(self, eps: float) -> np.ndarray:
        return (self.values < eps).ravel()

    def level_set(self, eps: float) -> np.ndarray:
        """Grid points with ``smin < eps`` (strict)."""
        return self.points[self.mask(eps)]

    @property
    def level_sets(self) -> dict:
        return {float(e): self.level_set(e) for e in self.eps_levels}

    def to_csv(self) -> str:
        rows = ["re,im,smin"]
        for z, v in zip(self.points, self.values.ravel()):
            rows.append(f"{format_float(z.real)},{format_float(z.imag)},{format_float(v)}")
        return "\n".join(rows) + "\n"

    def to_json(self) -> str:
        doc = {
            "rect": list(self.rect.as_tuple()),
            "nx": self.nx,
            "ny": self.ny,
            "eps_levels": [float(e) for e in self.eps_levels],
            "smin": [float(v) for v in self.values.ravel()],
            "level_sets": [
                {"eps": float(e), "points": [[float(z.real), float(z.imag)] for z in self.level_set(e)]}
                for e in self.eps_levels
            ],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PseudospectrumGrid":
        doc = json.loads(text)
        values = np.asarray(doc["smin"], dtype=float).reshape(doc["ny"], doc["nx"])
        return cls(Rect(*doc["rect"]), doc["nx"], doc["ny"], values, list(doc["eps_levels"]),
                   doc.get("meta", {}))

    def save(self, path, fmt: str | None = None) -> None:
        fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
        atomic_write_text(path, self.to_csv() if fmt == "csv" else self.to_json())


def pseudospectrum(A: BandedOperator, rect: Rect, nx: int, ny: int, eps_levels, *,
                   seed: int = 0) -> PseudospectrumGrid:
    """Smallest singular values of ``A - lambda`` over an ``nx`` by ``ny`` grid of ``rect``.

    Points where inverse iteration hit its cap keep their best estimate; their
    number is recorded in ``meta["capped"]``.
    """
    if nx < 8 or ny < 8:
        raise InvalidParameter("pseudospectrum grids need nx, ny >= 8")
    re = np.linspace(rect.re_lo, rect.re_hi, nx)
    im = np.linspace(rect.im_lo, rect.im_hi, ny)
    lams = np.ascontiguousarray((re[None, :] + 1j * im[:, None]).ravel())
    vals, status = _smin_grid(A.sub, A.diag, A.sup, lams, _start_vector(A.n, seed), SMIN_RTOL, SMIN_MAX_ITER)
    capped = int(np.sum(status == 2))
    if capped:
        warnings.warn(f"{capped} grid points reached the inverse-iteration cap", RuntimeWarning, stacklevel=2)
    meta = {"n": A.n, "h": A.h, "seed": seed, "capped": capped, "operator": A.meta}
    eps_levels = sorted(float(e) for e in eps_levels)
    return PseudospectrumGrid(rect, nx, ny, vals.reshape(ny, nx), eps_levels, meta)


def attouch_wets(set_a, set_b, radii) -> dict:
    """Two-sided sup-distances restricted to closed balls ``|z| <= rho``.

    Returns ``{"per_rho": [...], "max": ...}``.
    """
    a = np.asarray(set_a, dtype=complex).ravel()
    b = np.asarray(set_b, dtype=complex).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySet("both point sets must be non-empty")
    radii = [float(r) for r in radii]
    if not radii or any(not r > 0 for r in radii):
        raise InvalidParameter("radii must be positive")
    pa = np.column_stack([a.real, a.imag])
    pb = np.column_stack([b.real, b.imag])
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    per = []
    for rho in radii:
        ma = np.abs(a) <= rho
        mb = np.abs(b) <= rho
        left = float(np.max(da[ma])) if np.any(ma) else 0.0
        right = float(np.max(db[mb])) if np.any(mb) else 0.0
        per.append(max(left, right))
    return {"per_rho": per, "max": max(per)}
