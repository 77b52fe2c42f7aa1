import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spexact.errors import EmptySet, MeshTooCoarse, SiteOffMesh
from spexact.matrix import (BandedOperator, PseudospectrumGrid, attouch_wets, count_in_rect, discretize,
                            eigs_in_rect, pseudospectrum, resolvent_norm, smallest_singular_value)
from spexact.ode import OdeForm
from spexact.potentials import SampleBox, builtin, enclosure_region, from_expressions, verify_assumptions
from spexact.rect import Rect
from spexact.shooting import BoundaryCondition, TruncatedProblem, find_eigenvalues, truncate

D = BoundaryCondition.dirichlet()


def free_box(n, left=D, right=D, length=math.pi):
    p = TruncatedProblem(OdeForm("cartesian", from_expressions("0")), (0.0, length), left, right)
    return discretize(p, n)


def test_free_box_lowest():
    A = free_box(200)
    lams = eigs_in_rect(A, Rect(0.5, 1.5, -1, 1))
    assert len(lams) == 1 and abs(lams[0][0] - 1) < 1e-3


def test_free_box_discrete_spectrum_exact():
    n = 400
    A = free_box(n)
    h = math.pi / (n + 1)
    want = [(4 / h**2) * math.sin(k * h / 2) ** 2 for k in (1, 2)]
    got = eigs_in_rect(A, Rect(0.5, 4.5, -1, 1))
    assert [m for _, m in got] == [1, 1]
    assert np.allclose([z.real for z, _ in got], want, atol=1e-9)


def test_harmonic_lowest():
    A = discretize(truncate(builtin("harmonic"), 8), 800)
    z, m = eigs_in_rect(A, Rect(0, 2, -1, 1))[0]
    assert abs(z - 1) < 1e-3 and m == 1


def test_robin_matrix_converges_to_shooting():
    rb = BoundaryCondition.robin(1.0)
    p = TruncatedProblem(OdeForm("cartesian", from_expressions("0")), (0.0, 1.0), rb, rb)
    ref = np.array([r.lam for r in find_eigenvalues(p, Rect(0.5, 30, -1, 1), 1e-12)])
    errs = []
    for n in (200, 400, 800):
        got = np.array([z for z, _ in eigs_in_rect(discretize(p, n), Rect(0.5, 30, -1, 1))])
        errs.append(np.max(np.abs(got - ref)))
    assert errs[-1] < 1e-4
    assert 3 < errs[0] / errs[1] < 5 and 3 < errs[1] / errs[2] < 5


def test_diagonal_operator():
    A = BandedOperator.from_diagonal([1, 2 + 1j, 5])
    assert eigs_in_rect(A, Rect(1.5, 2.5, 0.5, 1.5)) == [(2 + 1j, 1)]


def test_resolvent_norm_selfadjoint():
    A = free_box(400)
    assert resolvent_norm(A, 0.0) == pytest.approx(1.0, rel=1e-4)
    assert resolvent_norm(A, 2.5) == pytest.approx(1 / 1.5, rel=1e-3)


def test_resolvent_norm_non_normal_against_dense_svd():
    A = discretize(truncate(builtin("ix"), 5), 100)
    dense = A.to_dense()
    ev = np.linalg.eigvals(dense)
    for lam in (3.0, 5.0, 6.5):
        smin = np.linalg.svd(dense - lam * np.eye(A.n), compute_uv=False)[-1]
        got = resolvent_norm(A, lam)
        assert got == pytest.approx(1 / smin, rel=1e-6)
        assert got > 1 / np.min(np.abs(ev - lam))


def test_resolvent_norm_at_least_inverse_distance():
    A = discretize(truncate(builtin("ix3"), 4), 200)
    ev = np.linalg.eigvals(A.to_dense())
    rng = np.random.default_rng(3)
    for lam in rng.uniform(0, 10, 10) + 1j * rng.uniform(-3, 3, 10):
        assert resolvent_norm(A, lam) >= (1 - 1e-6) / np.min(np.abs(ev - lam))


def test_pseudospectrum_selfadjoint_level_set_is_distance_set():
    n = 400
    A = free_box(n)
    h = math.pi / (n + 1)
    ev = np.array([(4 / h**2) * math.sin(k * h / 2) ** 2 for k in range(1, 6)])
    grid = pseudospectrum(A, Rect(0, 10, -1, 1), 37, 11, [0.5])
    dist = np.min(np.abs(grid.points[:, None] - ev[None, :]), axis=1)
    assert np.array_equal(grid.mask(0.5), dist < 0.5)


@pytest.fixture(scope="module")
def ix_grid():
    A = discretize(truncate(builtin("ix"), 8), 800)
    return pseudospectrum(A, Rect(0, 10, -1, 1), 21, 9, [1e-3, 1e-2, 1e-1])


def test_level_sets_nested(ix_grid):
    m3, m2, m1 = (ix_grid.mask(e) for e in (1e-3, 1e-2, 1e-1))
    assert np.all(m3 <= m2) and np.all(m2 <= m1)
    assert m3.sum() < m2.sum() < m1.sum()


def test_ix_pseudospectrum_grows_with_domain(ix_grid):
    small = pseudospectrum(discretize(truncate(builtin("ix"), 5), 800), Rect(0, 10, -1, 1), 21, 9, [1e-2])
    assert small.mask(1e-2).sum() < ix_grid.mask(1e-2).sum()
    on_axis = (np.abs(ix_grid.points.imag) < 1e-12) & (ix_grid.points.real >= 2.5)
    assert np.all(ix_grid.mask(1e-2)[on_axis])


def test_grid_json_round_trip(ix_grid):
    again = PseudospectrumGrid.from_json(ix_grid.to_json())
    assert np.array_equal(again.values, ix_grid.values)
    assert again.to_csv() == ix_grid.to_csv()


def test_attouch_wets_examples():
    a = np.array([0.0, 1 + 1j, -2j])
    assert attouch_wets(a, a, [1, 5])["max"] == 0.0
    assert attouch_wets([0], [1], [2])["per_rho"] == [1.0]
    assert attouch_wets([0], [30], [2])["per_rho"] == [30.0]
    with pytest.raises(EmptySet):
        attouch_wets([], [1], [2])


def _aw_brute(a, b, rho):
    def one_side(x, y):
        vals = [min(abs(p - q) for q in y) for p in x if abs(p) <= rho]
        return max(vals) if vals else 0.0

    return max(one_side(a, b), one_side(b, a))


def test_attouch_wets_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(5):
        a = rng.normal(0, 8, 50) + 1j * rng.normal(0, 8, 50)
        b = rng.normal(0, 8, 50) + 1j * rng.normal(0, 8, 50)
        got = attouch_wets(a, b, [10.0])["per_rho"][0]
        assert got == pytest.approx(_aw_brute(a, b, 10.0), abs=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_shift_covariance(cr, ci):
    c = complex(cr, ci)
    A = discretize(truncate(builtin("ix3"), 4), 120)
    rect = Rect(0.3, 9.7, -2.3, 2.3)
    base = eigs_in_rect(A, rect)
    shifted = eigs_in_rect(A.shifted(c), rect.shifted(c))
    assert len(base) == len(shifted)
    for (z1, m1), (z2, m2) in zip(base, sorted(shifted, key=lambda t: (t[0].real, t[0].imag))):
        assert m1 == m2 and abs(z1 + c - z2) < 1e-7


def test_enclosure_consistency_ix3_minus_x2():
    spec = builtin("ix3_minus_x2")
    rep = verify_assumptions(spec, "II", SampleBox(-6, 6, 601))
    A = discretize(truncate(spec, 6), 600)
    lams = [z for z, _ in eigs_in_rect(A, Rect(-30, 30, -30, 30))]
    assert lams
    for b in (rep.measured["b_U_hat"] + 0.05, 0.5, 0.9):
        region = enclosure_region("sector_R", b_prime=b, a=rep.measured["a_U_hat"], m_tr=0.0)
        assert not any(region.contains(z) for z in lams)


def test_mesh_refinement_ratio_about_four():
    p = truncate(builtin("ix3"), 6)
    ref = find_eigenvalues(p, Rect(0.5, 5, -1, 1), 1e-12)
    errs = []
    for n in (300, 600, 1200):
        got = eigs_in_rect(discretize(p, n), Rect(0.5, 5, -1, 1))
        errs.append(max(abs(z - r.lam) for (z, _), r in zip(got, ref)))
    for e1, e2 in zip(errs, errs[1:]):
        assert 4 * 0.8 < e1 / e2 < 4 * 1.2


def test_radial_meshes_second_order():
    for kind, spec, l, r_in, lam in (("radial3d", builtin("harmonic", 3), 1, None, 5.0),
                                     ("radial2d", builtin("rotated_harmonic(1+3i)", 2), 0, 1.0, None)):
        p = truncate(spec, 6, kind=kind, l=l, r_in=r_in)
        rect = Rect(0, 10, -1, 1) if lam else Rect(7, 10, 8, 11)
        ref = find_eigenvalues(p, rect, 1e-12)[0].lam
        e = [abs(eigs_in_rect(discretize(p, n), rect)[0][0] - ref) for n in (400, 800)]
        assert 3 < e[0] / e[1] < 5


def test_errors():
    with pytest.raises(MeshTooCoarse):
        discretize(truncate(builtin("ix"), 4), 10)
    q = truncate(builtin("shifted_complex_harmonic_delta"), 8)
    off = TruncatedProblem(q.form, q.interval, q.left_bc, q.right_bc, ((-8 + 0.01, 1j),))
    with pytest.raises(SiteOffMesh):
        discretize(off, 100)


def test_smallest_singular_value_matches_count():
    A = free_box(300)
    assert smallest_singular_value(A, 1.0 + 0.5j) == pytest.approx(0.5, rel=1e-3)
    assert count_in_rect(A, Rect(0.5, 10, -1, 1)) == 3
