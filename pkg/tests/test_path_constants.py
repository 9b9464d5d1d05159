import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhym3.errors import InadmissibleClassError, UnsupportedPhaseError
from dhym3.lemmas import SampleSpec, check_ct_lemma, ct_lemma_slacks
from dhym3.path_constants import (
    ClassIntegrals,
    class_integral_z,
    compute_ct,
    compute_theta_hat,
    constant_class_integrals,
    path_constant,
)
from dhym3.phase_algebra import PhaseParameter

PH = PhaseParameter(3 * math.pi / 4)
I3 = np.eye(3)
BASE = ClassIntegrals(8.0, 6.0, 1.0)


def test_constant_class_integrals_examples():
    assert constant_class_integrals(I3, 2 * I3, 1.0) == pytest.approx(BASE)
    z = constant_class_integrals(I3, np.zeros((3, 3)), 3.0)
    assert (z.int_Omega3, z.int_3omega2Omega, z.int_omega3) == (0.0, 0.0, 3.0)
    r = constant_class_integrals(I3, np.diag([1.0, 2.0, 3.0]), 2.0)
    assert (r.int_Omega3, r.int_3omega2Omega, r.int_omega3) == pytest.approx((12, 12, 2))


def test_compute_ct_baseline():
    assert compute_ct(BASE, 0.0, PH).c_t == pytest.approx(2 / 3, abs=1e-15)
    assert compute_ct(BASE, 1.0, PH).c_t == pytest.approx(1.0, abs=1e-15)
    assert compute_ct(BASE, 0.5, PH).c_t == pytest.approx(5 / 6, abs=1e-15)
    for t in np.linspace(0, 1, 11):
        assert compute_ct(BASE, t, PH).c_t == pytest.approx((2 + t) / 3, abs=1e-14)


def test_compute_ct_scales_with_volume():
    V = (2 * math.pi) ** 6
    ints = ClassIntegrals(8 * V, 6 * V, V)
    assert compute_ct(ints, 0.0, PH).c_t == pytest.approx(2 / 3, rel=1e-14)


def test_compute_ct_domain_and_admissibility():
    with pytest.raises(ValueError):
        compute_ct(BASE, 1.5, PH)
    with pytest.raises(ValueError):
        compute_ct(BASE, -0.1, PH)
    with pytest.raises(InadmissibleClassError):
        compute_ct(ClassIntegrals(9.0, 6.0, 1.0), 0.0, PH)
    with pytest.raises(InadmissibleClassError):
        ClassIntegrals(1.0, 1.0, 0.0)


def compatible_integrals(ph, c0):
    """Class with the given c_0; compatibility forces c_0 = 1 + 2 tan / sigma_1."""
    s1 = 2 * ph.tan_theta / (c0 - 1)
    s3 = ph.sec2_theta * s1 + 2 * ph.tan_theta * ph.sec2_theta
    return ClassIntegrals(s3, s1, 1.0)


def test_compute_ct_rejects_low_c():
    ints = compatible_integrals(PH, 0.2)
    with pytest.raises(InadmissibleClassError, match="1/3"):
        compute_ct(ints, 0.0, PH)
    # later on the path the same class is fine: c_t = (1 - t) 0.2 + t
    assert compute_ct(ints, 1.0, PH).c_t == pytest.approx(1.0, abs=1e-14)


def test_ct_affine_and_increasing():
    rng = np.random.default_rng(0)
    for _ in range(50):
        ph = PhaseParameter(rng.uniform(math.pi / 2 + 0.05, math.pi - 0.01))
        alpha = rng.uniform(1 / 3 + 1e-3, 1 - 1e-3)
        ints = compatible_integrals(ph, alpha)
        ts = np.linspace(0, 1, 11)
        cs = np.array([compute_ct(ints, t, ph).c_t for t in ts])
        np.testing.assert_allclose(cs, (1 - ts) * alpha + ts, atol=1e-13)
        assert np.all(np.diff(cs) >= 0)
        assert path_constant(ints.int_Omega3, ints.int_3omega2Omega, 1.0, ts, ph) == pytest.approx(cs)


def test_theta_hat_examples():
    assert compute_theta_hat(class_integral_z(I3, I3, 1.0)).theta_hat == pytest.approx(3 * math.pi / 4)
    z = class_integral_z(I3, math.tan(math.pi / 3) * I3, 1.0)
    assert z == pytest.approx(-8 + 0j, abs=1e-12)
    assert compute_theta_hat(z).theta_hat == pytest.approx(math.pi, abs=1e-12)
    with pytest.raises(UnsupportedPhaseError):
        compute_theta_hat(5.0 + 0j)
    with pytest.raises(UnsupportedPhaseError):
        compute_theta_hat(0j)
    assert compute_theta_hat(-1 - 1j).theta_hat == pytest.approx(5 * math.pi / 4)


def test_ct_slacks_baseline():
    sl = ct_lemma_slacks(np.array([8.0]), np.array([6.0]), np.array([1.0]), PhaseBatch_of(PH), [0.0, 1.0])
    assert sl["upper"][0, 1] == pytest.approx(0.0, abs=1e-15)
    assert sl["lower"][0, 0] == pytest.approx(1 / 3, abs=1e-15)
    assert sl["c"][0, 0] == pytest.approx(2 / 3)


def PhaseBatch_of(ph):
    from dhym3.phase_algebra import PhaseBatch

    return PhaseBatch(np.array([ph.theta_hat]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**63), count=st.integers(1, 300))
def test_ct_lemma_on_random_backgrounds(seed, count):
    rep = check_ct_lemma(SampleSpec(count=count, seed=seed))
    assert rep.passed, rep.to_json()


def test_ct_lemma_report_replayable():
    a = check_ct_lemma(SampleSpec(count=500, seed=9)).to_json()
    b = check_ct_lemma(SampleSpec(count=500, seed=9)).to_json()
    assert a == b
    s = a["worst_sample"]
    assert set(s) >= {"lambda", "c", "t", "theta_hat"}
