"""Acceptance criteria 1-10, one pass/fail line each (see the summary section of the pytest run)."""

import io
import json
import math
import time

import numpy as np
import pytest

from spexact.cli import main
from spexact.contour import PhaseSampler, winding_number
from spexact.errors import ZeroOnContour
from spexact.matrix import PseudospectrumGrid, attouch_wets, discretize, eigs_in_rect, pseudospectrum
from spexact.ode import OdeForm, propagate
from spexact.potentials import SampleBox, builtin, enclosure_region, from_expressions, verify_assumptions
from spexact.rect import Rect
from spexact.separable import Geometry, cube_modes, degeneracy, radial_modes
from spexact.shooting import find_eigenvalues, truncate
from spexact.sweep import ProblemTemplate, SweepPlan, SweepResult, fit_rate, parse_sizes, sweep

IX3_REF = (1.1562671, 4.1092288, 7.5622739, 11.314422, 15.291554, 19.451529)
EXTERIOR_REF = (8.1962583 + 9.8951098j, 8.5747825 + 9.9950630j, 9.6945118 + 10.3061585j,
                11.5061205 + 10.8625746j, 13.9201983 + 11.7211938j, 16.7923324 + 12.9529682j,
                19.9029928 + 14.6018978j)
AIRY_HALF = 2.33810741 / 2


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def ix_sweep():
    t0 = time.perf_counter()
    plan = SweepPlan(ProblemTemplate(builtin("ix")), parse_sizes("6:0.25:10"), Rect(0, 10, -10, 10))
    res = sweep(plan, fit_rates=False)
    return res, time.perf_counter() - t0


def test_criterion_01_imaginary_cubic(acceptance_report):
    t0 = time.perf_counter()
    code, out = cli("eigs", "ix3", "--s", "10", "--bc", "dirichlet")
    elapsed = time.perf_counter() - t0
    vals = [float(line.split(",")[0]) + 1j * float(line.split(",")[1]) for line in out.splitlines()[1:]]
    err = max(abs(v - r) for v, r in zip(vals, IX3_REF)) if len(vals) == 6 else math.inf
    ok = code == 0 and len(vals) == 6 and err < 1e-5 and elapsed < 60
    acceptance_report(1, ok, f"{len(vals)} eigenvalues, max error {err:.2e}, {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_02_airy_limit(acceptance_report, ix_sweep):
    res, elapsed = ix_sweep
    lowest = min(res.trajectories, key=lambda t: t.records[-1].lam.real)
    last = lowest.records[-1].lam
    gap = abs(last.real - AIRY_HALF)
    ok = gap < 2e-3 and lowest.classification == "diverging_pair" and elapsed < 120
    acceptance_report(2, ok, f"Re {last.real:.6f} (|gap| {gap:.1e}), class {lowest.classification}, "
                             f"{elapsed:.1f} s")
    assert ok


def test_criterion_03_exterior_table(acceptance_report):
    t0 = time.perf_counter()
    code, out = cli("eigs", "exterior", "--s", "10", "--format", "json")
    elapsed = time.perf_counter() - t0
    modes = json.loads(out)["modes"]
    errs = []
    for l, ref in enumerate(EXTERIOR_REF):
        recs = modes.get(str(l), [])
        errs.append(abs(complex(recs[0]["re"], recs[0]["im"]) - ref) if len(recs) == 1 else math.inf)
    none_at_7 = modes.get("7") == []
    ok = code == 0 and max(errs) < 1e-6 and none_at_7 and elapsed < 120
    acceptance_report(3, ok, f"max error {max(errs):.1e} over l=0..6, l=7 empty: {none_at_7}, {elapsed:.1f} s")
    assert ok


def test_criterion_04_harmonic_3d(acceptance_report):
    t0 = time.perf_counter()
    window = Rect(0, 8, -1, 1)
    cube = cube_modes(Geometry("cube", 8.0), builtin("harmonic"), window).assembled(1e-4)
    ball = radial_modes(Geometry("ball3d", 8.0), builtin("harmonic", 3), window).assembled(1e-4)
    elapsed = time.perf_counter() - t0
    cube_err = max(abs(z - (2 * k + 1)) for k, (z, _) in enumerate(cube, start=1))
    mults_ok = [m for _, m in cube] == [degeneracy(k) for k in (1, 2, 3)]
    agree = len(cube) == len(ball) and all(m1 == m2 and abs(z1 - z2) < 1e-4
                                           for (z1, m1), (z2, m2) in zip(cube, ball))
    ok = len(cube) == 3 and cube_err < 1e-4 and mults_ok and agree and elapsed < 60
    acceptance_report(4, ok, f"cube {[(round(z.real, 6), m) for z, m in cube]}, error {cube_err:.1e}, "
                             f"ball agrees: {agree}, {elapsed:.1f} s")
    assert ok


def test_criterion_05_exponential_rate(acceptance_report):
    window = Rect(0.5, 2, -0.5, 0.5)
    plan = SweepPlan(ProblemTemplate(builtin("ix3")), parse_sizes("3:0.05:8"), window, tol=1e-12)
    res = sweep(plan, fit_rates=False)
    t = min(res.trajectories, key=lambda tr: tr.records[-1].lam.real)
    limit = find_eigenvalues(truncate(builtin("ix3"), 10), window, 1e-12)[0].lam
    fit = fit_rate(t, limit)
    ok = fit.model == "exponential" and fit.slope < -1 and fit.r_squared > 0.9
    acceptance_report(5, ok, f"model {fit.model}, slope {fit.slope:.3f}, r^2 {fit.r_squared:.3f}")
    assert ok


def _error_ratio(name):
    p = truncate(builtin(name), 8)
    window = Rect(0, 15, -5, 5)
    ref = np.array([r.lam for r in find_eigenvalues(p, window, 1e-12) for _ in range(r.multiplicity)])
    errs = []
    for n in (800, 1600):
        got = [z for z, m in eigs_in_rect(discretize(p, n), window) for _ in range(m)]
        if len(got) != len(ref):
            return len(ref), math.nan, math.nan
        errs.append(max(np.min(np.abs(ref - z)) for z in got))
    return len(ref), errs[1], errs[0] / errs[1]


def test_criterion_06_oracle_equivalence(acceptance_report):
    parts, ok = [], True
    for name in ("ix", "ix3"):
        count, err, ratio = _error_ratio(name)
        ok &= 3 <= ratio <= 5
        parts.append(f"{name}: {count} eigenvalues, error {err:.1e} at n=1600, ratio {ratio:.2f}")
    acceptance_report(6, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_07_no_pollution(acceptance_report, ix_sweep):
    ix_conv = [t for t in ix_sweep[0].trajectories if t.classification == "converged"]
    plan = SweepPlan(ProblemTemplate(builtin("ix3")), parse_sizes("3:1:10"), Rect(0, 20, -6, 6))
    ix3_conv = [t for t in sweep(plan, fit_rates=False).trajectories if t.classification == "converged"]
    limits = sorted((t.limit for t in ix3_conv), key=lambda z: z.real)
    match = len(limits) == 6 and all(abs(z - r) < 1e-5 for z, r in zip(limits, IX3_REF))
    ok = not ix_conv and match
    acceptance_report(7, ok, f"ix converged: {len(ix_conv)}, ix3 converged: {len(ix3_conv)}, "
                             f"limits match criterion 1: {match}")
    assert ok


@pytest.mark.filterwarnings("ignore:.*inverse-iteration cap")
@pytest.mark.slow
def test_criterion_08_pseudospectra(acceptance_report):
    rect, eps = Rect(0, 10, -3, 3), (0.01, 0.1, 0.5)
    grids = {}
    for s in (5, 6, 7, 8, 9):
        # fixed mesh width h = 1/40 so only the truncation changes
        grids[s] = pseudospectrum(discretize(truncate(builtin("harmonic"), s), 80 * s - 1), rect, 101, 61, eps)
    nested = all(np.all(g.mask(a) <= g.mask(b)) for g in grids.values() for a, b in zip(eps, eps[1:]))
    d = [attouch_wets(grids[s].level_set(0.1), grids[s + 1].level_set(0.1), [5, 10, 20])["max"]
         for s in (5, 6, 7, 8)]
    monotone = all(b <= a for a, b in zip(d, d[1:]))
    ok = nested and monotone
    acceptance_report(8, ok, f"d_AW(s, s+1) for s=5..8: {d}, non-increasing: {monotone}, nested: {nested}")
    assert ok


def test_criterion_09_enclosure(acceptance_report):
    spec = builtin("ix3_alpha(0.5)")
    rep = verify_assumptions(spec, "II", SampleBox(-6, 6, 601))
    a = rep.measured["a_U_hat"]
    region = enclosure_region("sector_R", b_prime=0.5, a=a, m_tr=0.0)
    lams = [r.lam for r in find_eigenvalues(truncate(spec, 6), Rect(-40, 40, -40, 40))]
    inside = [z for z in lams if region.contains(z)]
    ok = rep.passed and bool(lams) and not inside
    acceptance_report(9, ok, f"{len(lams)} eigenvalues, {len(inside)} inside sector_R(0.5, a={a:.3g}, 0)")
    assert ok


def test_criterion_10_invariants(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    # partition additivity
    additive = True
    for _ in range(10):
        roots = rng.uniform(0.2, 9.8, 5) + 1j * rng.uniform(-4.8, 4.8, 5)
        sampler = PhaseSampler(lambda z, r=roots: np.sum(np.log(z[:, None] - r[None, :]), axis=1))
        cx, cy = rng.uniform(2.3, 7.7), rng.uniform(-2.7, 2.7)
        parts = [Rect(0, cx, -5, cy), Rect(cx, 10, -5, cy), Rect(0, cx, cy, 5), Rect(cx, 10, cy, 5)]
        try:
            additive &= sum(winding_number(sampler, p) for p in parts) == winding_number(sampler, Rect(0, 10, -5, 5))
        except ZeroOnContour:
            continue
    # Wronskian conservation
    form = OdeForm("cartesian", from_expressions("1j*x**3 + x"))
    F, G, LS, _ = propagate(form, [3 - 1j, 3 - 1j], np.linspace(-3, 3, 25), [1.0, 0.0], [0.0, 1.0], [0.0, 0.0],
                            1e-10)
    w = (F[0] * G[1] - G[0] * F[1]) * np.exp(LS[0] + LS[1])
    wronskian = np.max(np.abs(w - w[0])) <= 1e-7 * abs(w[0])
    # matching-point invariance
    p = truncate(builtin("ix3"), 8)
    base = [r.lam for r in find_eigenvalues(p, Rect(0, 10, -2, 2), 1e-10)]
    moved = [r.lam for r in find_eigenvalues(p.with_interval(p.interval, match_point=2.5), Rect(0, 10, -2, 2),
                                             1e-10)]
    matching = len(base) == len(moved) and np.allclose(base, moved, atol=1e-8)
    # CSV / JSON round trip determinism
    plan = SweepPlan(ProblemTemplate(builtin("ix3")), (4.0, 5.0, 6.0), Rect(0, 5, -1, 1))
    r1, r2 = sweep(plan), sweep(plan)
    grid = pseudospectrum(discretize(truncate(builtin("ix"), 5), 200), Rect(0, 10, -2, 2), 11, 9, [0.1])
    roundtrip = (r1.to_csv() == r2.to_csv() and SweepResult.from_json(r1.to_json()).to_csv() == r1.to_csv()
                 and PseudospectrumGrid.from_json(grid.to_json()).to_csv() == grid.to_csv())
    elapsed = time.perf_counter() - t0
    ok = additive and wronskian and matching and roundtrip
    acceptance_report(10, ok, f"additivity {additive}, wronskian {wronskian}, matching point {matching}, "
                              f"round trip {roundtrip}, {elapsed:.1f} s")
    assert ok
