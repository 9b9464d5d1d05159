import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dhym3.lemmas as lemmas
from dhym3.errors import SamplerStarvedError
from dhym3.lemmas import (
    CHECKS,
    SampleSpec,
    boundary_stages,
    check_boundary_exclusion,
    check_convexity_lemma,
    check_discriminant,
    check_euler_bound,
    pair_sum_bound,
    run_all,
    sample_cone_point,
    sample_cone_points,
)
from dhym3.phase_algebra import (
    ConvexityQuantities,
    PhaseParameter,
    cone_check,
    convexity_quantities,
    euler_bound_check,
)

PH = PhaseParameter(3 * math.pi / 4)


def test_sample_spec_validation():
    with pytest.raises(ValueError):
        SampleSpec(count=0)
    with pytest.raises(ValueError):
        SampleSpec(theta_range=(1.0, 2.0))
    with pytest.raises(ValueError):
        SampleSpec(theta_range=(3.0, 2.0))
    with pytest.raises(ValueError):
        SampleSpec(lambda_scale=0.5)


def test_sampler_deterministic():
    spec = SampleSpec(count=300, seed=42)
    a, b = sample_cone_points(spec), sample_cone_points(spec)
    for x, y in zip((a.lam, a.c, a.t, a.theta), (b.lam, b.c, b.t, b.theta)):
        np.testing.assert_array_equal(x, y)
    c = sample_cone_points(SampleSpec(count=300, seed=43))
    assert not np.array_equal(a.lam, c.lam)


def test_sample_cone_point_postconditions():
    rng = SampleSpec().rng()
    for _ in range(20):
        lam, c, t, ph = sample_cone_point(SampleSpec(), rng)
        assert cone_check(lam, c, t, ph).admissible
        assert np.all(np.diff(lam) < 0)
        assert 0 <= t <= 1 and c > 1 / 3


def test_sampler_off_level_set():
    s = sample_cone_points(SampleSpec(count=500, seed=1, on_level_set=False))
    assert cone_check(s.lam, s.c, s.t, s.phase).admissible.all()


def test_sampler_starvation(monkeypatch):
    class Never:
        def __init__(self, lam, *a):
            self.admissible = np.zeros(len(lam), dtype=bool)

    monkeypatch.setattr(lemmas, "cone_check", Never)
    with pytest.raises(SamplerStarvedError):
        sample_cone_points(SampleSpec(count=5), budget_factor=1)


@pytest.mark.parametrize("name", list(CHECKS))
def test_reports_are_bit_identical(name):
    spec = SampleSpec(count=400, seed=5)
    a = json.dumps(CHECKS[name](spec).to_json(), sort_keys=True)
    b = json.dumps(CHECKS[name](spec).to_json(), sort_keys=True)
    assert a == b


@pytest.mark.parametrize("name", list(CHECKS))
def test_report_schema(name):
    rep = CHECKS[name](SampleSpec(count=200, seed=3)).to_json()
    assert {"lemma", "count", "worst_slack", "worst_sample", "pass"} <= set(rep)
    assert rep["lemma"] == name and rep["count"] == 200 and rep["pass"] is True
    assert {"lambda", "c", "t", "theta_hat"} <= set(rep["worst_sample"])
    json.dumps(rep)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**64 - 1))
def test_all_checks_pass_for_any_seed(seed):
    for rep in run_all(SampleSpec(count=500, seed=seed)):
        assert rep.passed, rep.to_json()


def test_extended_theta_range():
    spec = SampleSpec(count=2000, seed=4, theta_range=(math.pi / 2 + 0.05, 3 * math.pi / 2 - 0.05))
    for name in ("convexity_lemma", "discriminant", "euler_bound"):
        assert CHECKS[name](spec).passed


def test_convexity_worst_sample_is_replayable():
    rep = check_convexity_lemma(SampleSpec(count=1000, seed=12))
    s = rep.worst_sample
    B = np.array([[complex(*z) for z in row] for row in s["B"]])
    ph = PhaseParameter(s["theta_hat"], margin=0)
    lam = np.array(s["lambda"])
    from dhym3.phase_algebra import hessian_quadratic_form

    q = hessian_quadratic_form(lam, s["c"], s["t"], ph, B)
    num = s["c"] * lam.sum() + 2 * s["t"] * ph.tan_theta
    off = np.abs(B) ** 2 / np.outer(lam, lam)
    np.fill_diagonal(off, 0)
    assert q - num / lam.prod() * off.sum() == pytest.approx(rep.worst_slack, rel=1e-9, abs=1e-15)


def test_convexity_audit_recorded():
    rep = check_convexity_lemma(SampleSpec(count=1000, seed=2))
    assert rep.details["audited"] == 10
    assert rep.details["max_hessian_fd_rel_error"] < 1e-6
    assert rep.details["max_gradient_fd_rel_error"] < 1e-6


def test_discriminant_at_t0_strictly_positive():
    spec = SampleSpec(count=1000, seed=6)
    s = sample_cone_points(spec, fixed_ct=(0.7, 0.0))
    q = convexity_quantities(s.lam, s.c, s.t, s.phase)
    assert np.all(q.g > 0)


def test_boundary_stages_approach_pair_product_edge():
    base = sample_cone_points(SampleSpec(count=50, seed=9))
    stages = boundary_stages(base)
    assert len(stages) == 40
    prod = [cone_check(s.lam, s.c, s.t, s.phase).min_pair_product_margin.max() for s in stages]
    assert prod[-1] < 1e-5 * prod[0]
    for s in stages:
        assert cone_check(s.lam, s.c, s.t, s.phase).admissible.all()
    # the pair-sum margin decreases toward its positive infimum
    ps = stages[-1]
    margin = cone_check(ps.lam, ps.c, ps.t, ps.phase).min_pair_sum_margin
    np.testing.assert_allclose(margin, pair_sum_bound(ps.c, ps.t, ps.phase), rtol=1e-5)


def test_euler_slack_shrinks_near_boundary():
    rep = check_euler_bound(SampleSpec(count=1000, seed=1))
    final = rep.details["driven_final_min_slack"]
    assert 0 <= final < 1e-6
    assert final < rep.details["driven_min_slack_by_stage"][0]


def test_boundary_exclusion_examples():
    assert pair_sum_bound(1.0, 1.0, PH) == pytest.approx(2 * math.sqrt(2) - 2)
    c0 = 2 / 3
    assert pair_sum_bound(c0, 0.0, PH) == pytest.approx(2 * c0**1.5 * math.sqrt(2))
    # equality case lam_2 = lam_3 = sqrt(c) |sec|
    for c, t in ((1.0, 1.0), (0.8, 0.4)):
        l = math.sqrt(c * PH.sec2_theta)
        assert c * 2 * l + 2 * t * PH.tan_theta == pytest.approx(pair_sum_bound(c, t, PH), abs=1e-12)
    assert check_boundary_exclusion(SampleSpec(count=1000)).details["min_bound"] > 0


def test_euler_baseline():
    assert euler_bound_check([2.0, 2.0, 2.0], 1.0, 1.0, PH) == pytest.approx(0.25)


def _flipped_B(lam, c, t, ph):
    q = convexity_quantities(lam, c, t, ph)
    tt = t * np.asarray(ph.tan_theta)
    N = c * np.sum(lam, axis=-1) + 2 * tt
    lam3 = np.asarray(lam)[..., 2]
    return ConvexityQuantities(q.E, q.D, 2 * (c * lam3 - tt) * N, q.g)


def test_sign_flip_mutation_is_caught(monkeypatch):
    monkeypatch.setattr(lemmas, "convexity_quantities", _flipped_B)
    rep = check_discriminant(SampleSpec(count=2000, seed=42))
    assert not rep.passed
    assert rep.details["max_identity_rel_error"] > 1e-3
    # the failing sample replays: mutated formula breaks the identity there, the real one does not
    s = rep.details["worst_identity_sample"]
    ph = PhaseParameter(s["theta_hat"], margin=0)
    lam = np.array(s["lambda"])
    N = s["c"] * lam.sum() + 2 * s["t"] * ph.tan_theta

    def defect(q):
        return abs(q.E * q.D - q.B**2 - 4 * N**2 * q.g) / max(abs(q.E * q.D), q.B**2)

    assert defect(_flipped_B(lam, s["c"], s["t"], ph)) > 1e-3
    assert defect(convexity_quantities(lam, s["c"], s["t"], ph)) <= 1e-10
