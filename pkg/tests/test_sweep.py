import math

import numpy as np
import pytest

from spexact.errors import InsufficientData, InvalidParameter, TooShort, UnknownTrajectory
from spexact.potentials import builtin
from spexact.rect import Rect
from spexact.shooting import EigenRecord, eigenfunction, tail_mass, truncate
from spexact.sweep import (ProblemTemplate, SweepPlan, SweepResult, Trajectory, classify, fit_rate, parse_sizes,
                           rate_bound_check, run_sweep, sweep, track)


def synthetic(values_by_s):
    return [(s, [EigenRecord(complex(v), 1, 0.0, s) for v in vals]) for s, vals in values_by_s]


def traj(fn, sizes):
    return Trajectory(0, [EigenRecord(complex(fn(s)), 1, 0.0, s) for s in sizes])


def test_parse_sizes():
    assert parse_sizes("6:0.25:7") == (6.0, 6.25, 6.5, 6.75, 7.0)
    assert parse_sizes("4,6,8") == (4.0, 6.0, 8.0)
    assert len(parse_sizes("0.05:0.05:10")) == 200
    with pytest.raises(InvalidParameter):
        parse_sizes("1:0:2")


def test_plan_rejects_unordered_sizes():
    with pytest.raises(InvalidParameter):
        SweepPlan(ProblemTemplate(builtin("ix")), (3, 2), Rect(0, 1, 0, 1))


def test_harmonic_sweep_is_stable():
    plan = SweepPlan(ProblemTemplate(builtin("harmonic")), (4, 6, 8), Rect(0, 6, -1, 1))
    errs = []
    for s, recs in run_sweep(plan):
        assert len(recs) == 3
        errs.append(np.max(np.abs(np.array([r.lam for r in recs]) - [1, 3, 5])))
    assert errs[0] < 1e-3 and errs[-1] < 1e-8
    assert errs[0] > errs[1] > errs[2]


def test_track_two_steady_trajectories():
    ts = track(synthetic([(1, [1.0, 3.0]), (2, [1.01, 2.99])]))
    assert len(ts) == 2 and all(t.partner is None for t in ts)
    assert [len(t.records) for t in ts] == [2, 2]


def test_track_merge_into_pair():
    slices = synthetic([(1, [2.0, 2.2]), (2, [2.1 - 0.5j, 2.1 + 0.5j]), (3, [2.1 - 1j, 2.1 + 1j]),
                        (4, [2.1 - 1.5j, 2.1 + 1.5j])])
    ts = track(slices)
    assert len(ts) == 2
    assert ts[0].partner == ts[1].id
    for t in ts:
        assert classify(t, 1e-6) == "diverging_pair"


def test_track_needs_two_sizes():
    with pytest.raises(TooShort):
        track(synthetic([(1, [1.0])]))


def test_classify_constant_converges():
    t = traj(lambda s: 2.0, (1, 2, 3, 4))
    assert classify(t, 1e-6) == "converged"
    assert t.limit == 2.0
    with pytest.raises(TooShort):
        classify(traj(lambda s: 2.0, (1, 2)), 1e-6)


def test_classify_growing_without_partner_is_unresolved():
    t = traj(lambda s: 1 + 1j * s, (1, 2, 3, 4))
    assert classify(t, 1e-6) == "unresolved"


def test_fit_rate_exponential():
    t = traj(lambda s: 3 + np.exp(-2 * s), np.linspace(1, 6, 11))
    f = fit_rate(t, 3.0)
    assert f.model == "exponential"
    assert f.slope == pytest.approx(-2, abs=1e-6)
    assert f.r_squared > 0.999999


def test_fit_rate_algebraic():
    t = traj(lambda s: 3 + s ** -3.0, np.linspace(1, 20, 20))
    f = fit_rate(t, 3.0)
    assert f.model == "algebraic"
    assert f.slope == pytest.approx(-3, abs=1e-9)


def test_fit_rate_needs_points_above_floor():
    t = traj(lambda s: 3 + (1e-14 if s > 2 else 1e-3), (1, 2, 3, 4, 5))
    with pytest.raises(InsufficientData):
        fit_rate(t, 3.0)


def test_rate_bound_exact_equality():
    sizes = np.arange(1.0, 8.0)
    tails = np.exp(-sizes)
    t = traj(lambda s: 1 + math.exp(-s), sizes)
    out = rate_bound_check(t, tails, 1.0)
    assert out["c_hat"] == pytest.approx(1.0)
    assert out["satisfied"]


def test_rate_bound_skips_zero_tails():
    t = traj(lambda s: 1 + math.exp(-s), (1, 2, 3))
    out = rate_bound_check(t, [math.exp(-1), 0.0, math.exp(-3)], 1.0)
    assert len(out["ratios"]) == 2


def test_rate_bound_harmonic_gaussian_tails():
    sizes = (4.0, 5.0, 6.0, 7.0, 8.0)
    plan = SweepPlan(ProblemTemplate(builtin("harmonic")), sizes, Rect(0.5, 1.5, -0.5, 0.5), tol=1e-13)
    res = sweep(plan, fit_rates=False)
    t = res.trajectories[0]
    phi = eigenfunction(truncate(builtin("harmonic"), 10), 1.0, grid=4001)
    tails = [tail_mass(phi, s) for s in sizes]
    out = rate_bound_check(t, tails, 1.0)
    assert math.isfinite(out["c_hat"])
    assert max(out["ratios"]) < 100


def test_rate_bound_ix3_first_eigenvalue():
    sizes = tuple(np.arange(3.0, 5.01, 0.25))
    plan = SweepPlan(ProblemTemplate(builtin("ix3")), sizes, Rect(0.5, 2, -0.5, 0.5), tol=1e-13)
    t = sweep(plan, fit_rates=False).trajectories[0]
    p = truncate(builtin("ix3"), 10)
    from spexact.shooting import find_eigenvalues

    lam = find_eigenvalues(p, Rect(0.5, 2, -0.5, 0.5), 1e-13)[0].lam
    phi = eigenfunction(p, lam, grid=4001)
    out = rate_bound_check(t, [tail_mass(phi, s) for s in sizes], lam)
    assert out["satisfied"]


@pytest.fixture(scope="module")
def small_ix3_sweep():
    plan = SweepPlan(ProblemTemplate(builtin("ix3")), (3, 4, 5, 6), Rect(0, 8, -3, 3))
    return plan, sweep(plan)


def test_sweep_converged_limits(small_ix3_sweep):
    _, res = small_ix3_sweep
    limits = sorted(t.limit.real for t in res.trajectories if t.classification == "converged")
    assert np.allclose(limits[:2], [1.1562671, 4.1092288], atol=1e-6)


def test_sweep_deterministic_and_round_trip(small_ix3_sweep):
    plan, res = small_ix3_sweep
    again = sweep(plan)
    assert again.to_csv() == res.to_csv()
    assert again.to_json() == res.to_json()
    back = SweepResult.from_json(res.to_json())
    assert back.to_json() == res.to_json()
    assert [t.records for t in back.trajectories] == [t.records for t in res.trajectories]


def test_sweep_csv_layout(small_ix3_sweep):
    _, res = small_ix3_sweep
    lines = res.to_csv().splitlines()
    assert lines[0] == "s,re,im,multiplicity,trajectory_id,class"
    assert all(len(l.split(",")) == 6 for l in lines[1:])


def test_unknown_trajectory(small_ix3_sweep):
    with pytest.raises(UnknownTrajectory):
        small_ix3_sweep[1].trajectory(999)


def test_multiplicity_constant_on_converged(small_ix3_sweep):
    for t in small_ix3_sweep[1].trajectories:
        if t.classification == "converged":
            assert len({r.multiplicity for r in t.records}) == 1


def test_window_monotonicity(small_ix3_sweep):
    plan, res = small_ix3_sweep
    wide = sweep(SweepPlan(plan.template, plan.sizes, Rect(0, 12, -4, 4)))
    small = [t.limit for t in res.trajectories if t.classification == "converged"]
    big = [t.limit for t in wide.trajectories if t.classification == "converged"]
    for z in small:
        assert min(abs(z - w) for w in big) < 1e-8
