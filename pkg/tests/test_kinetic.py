"""Closed-form facts about the FENE potential, Maxwellian, cut-offs and
entropy functions, cross-checked against adaptive quadrature where a second
independent route exists."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from feneflow import (
    ChainGeometry,
    CutoffParams,
    DomainError,
    RouseMatrix,
    bakry_emery_kappa,
    cutoff_beta,
    cutoff_beta_delta,
    entropy_eval,
    fene_potential,
    maxwellian_normalizer,
    maxwellian_value,
    secant_cutoff_coefficient,
)

# Frozen reference values, computed independently (closed forms and adaptive
# quadrature) before the implementation existed.
Z_ORACLE = {3.0: 6.0 * math.pi / 5.0,        # 2 pi b / (b + 2)
            4.0: 4.0 * math.pi / 3.0,
            8.0: 16.0 * math.pi / 10.0}
SECOND_MOMENT_ORACLE = {3.0: 6.0 / 7.0,      # d b / (b + d + 2), d = 2
                        4.0: 1.0,
                        8.0: 4.0 / 3.0}
U_AT_ONE_B4 = 1.3862943611198906             # 2 log 2
FL_AT_2L_L2 = 2.772588722239781              # 4 log 2
CHAIN3_A0 = 0.5857864376269049               # 2 - sqrt(2)


# --------------------------------------------------------------------------
# potential
# --------------------------------------------------------------------------


def test_potential_closed_form_values():
    U, Up = fene_potential(1.0, 4.0)
    assert U == pytest.approx(U_AT_ONE_B4, abs=1e-14)
    assert Up == pytest.approx(2.0, abs=1e-14)
    U0, Up0 = fene_potential(0.0, 4.0)
    assert U0 == 0.0 and Up0 == 1.0


def test_potential_near_cap_blowup():
    # s -> b/2 with 1 - 2s/b = 1e-6: U' = 1e6, U = -(b/2) log(1e-6); rounding
    # in forming 1 - 2s/b caps the achievable agreement near the pole
    b = 4.0
    s = (b / 2.0) * (1.0 - 1e-6)
    U, Up = fene_potential(s, b)
    assert Up == pytest.approx(1e6, rel=1e-9)
    assert U == pytest.approx(27.631021115871036, rel=1e-10)


def test_potential_domain_errors():
    with pytest.raises(DomainError):
        fene_potential(-0.1, 4.0)
    with pytest.raises(DomainError):
        fene_potential(2.0, 4.0)  # s = b/2 hits the cap
    with pytest.raises(DomainError):
        fene_potential(0.5, 2.0)  # b must exceed 2


def test_potential_derivative_is_consistent():
    # central differences of U against the returned U'
    s = np.linspace(0.05, 1.8, 40)
    h = 1e-6
    Up_fd = (fene_potential(s + h, 4.0)[0] - fene_potential(s - h, 4.0)[0]) / (2 * h)
    np.testing.assert_allclose(fene_potential(s, 4.0)[1], Up_fd, rtol=1e-8)


# --------------------------------------------------------------------------
# Maxwellian
# --------------------------------------------------------------------------


@pytest.mark.parametrize("b", [3.0, 4.0, 8.0])
def test_normalizer_matches_closed_form(b):
    assert maxwellian_normalizer(b, 2) == pytest.approx(Z_ORACLE[b], abs=1e-12)


@pytest.mark.parametrize("b", [3.0, 4.0, 8.0])
def test_normalizer_against_quadrature(b):
    # independent route: Z = 2 pi int_0^sqrt(b) (1 - r^2/b)^{b/2} r dr
    val, err = quad(lambda r: (1.0 - r * r / b) ** (b / 2.0) * r, 0.0, math.sqrt(b))
    assert 2.0 * math.pi * val == pytest.approx(maxwellian_normalizer(b, 2), abs=1e-10)


@pytest.mark.parametrize("b", [3.0, 4.0, 8.0])
def test_maxwellian_second_moment(b):
    Z = maxwellian_normalizer(b, 2)
    val, _ = quad(lambda r: maxwellian_value(r, b, Z) * r ** 3, 0.0, math.sqrt(b))
    assert 2.0 * math.pi * val == pytest.approx(SECOND_MOMENT_ORACLE[b], abs=1e-9)


def test_maxwellian_integrates_to_one():
    b = 4.0
    Z = maxwellian_normalizer(b, 2)
    val, _ = quad(lambda r: maxwellian_value(r, b, Z) * r, 0.0, math.sqrt(b))
    assert 2.0 * math.pi * val == pytest.approx(1.0, abs=1e-10)


def test_normalizer_3d_against_quadrature():
    b = 4.0
    val, _ = quad(lambda r: (1.0 - r * r / b) ** (b / 2.0) * r * r, 0.0, math.sqrt(b))
    assert 4.0 * math.pi * val == pytest.approx(maxwellian_normalizer(b, 3), rel=1e-10)


def test_normalizer_rejects_bad_input():
    with pytest.raises(DomainError):
        maxwellian_normalizer(2.0, 2)
    with pytest.raises(DomainError):
        maxwellian_normalizer(4.0, 4)


# --------------------------------------------------------------------------
# geometry / coupling matrix
# --------------------------------------------------------------------------


def test_dumbbell_coupling_is_identity():
    r = RouseMatrix.for_chain(1)
    assert r.A.shape == (1, 1) and r.A[0, 0] == 1.0
    assert r.a0 == 1.0


def test_chain3_smallest_eigenvalue():
    r = RouseMatrix.for_chain(3)
    assert r.a0 == pytest.approx(CHAIN3_A0, abs=1e-12)
    # second route: eigenvalues of (-1, 2, -1) are 2 - 2 cos(pi j / (K+1))
    assert r.a0 == pytest.approx(2.0 - 2.0 * math.cos(math.pi / 4.0), abs=1e-12)


def test_rouse_matrix_rejects_indefinite():
    with pytest.raises(ValueError):
        RouseMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        RouseMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_geometry_validation_messages():
    with pytest.raises(ValueError, match="gamma = b/2 must exceed 1"):
        ChainGeometry(K=1, d=2, b=(2.0,))
    with pytest.raises(ValueError):
        ChainGeometry(K=2, d=2, b=(4.0,))
    with pytest.raises(ValueError):
        ChainGeometry(K=1, d=4, b=(4.0,))


@pytest.mark.parametrize("b", [3.0, 4.0, 8.0])
def test_curvature_constant(b):
    kappa, min_eig = bakry_emery_kappa(ChainGeometry(K=1, d=2, b=(b,)))
    assert kappa == 1.0
    assert min_eig >= 1.0 - 1e-9


# --------------------------------------------------------------------------
# entropy functions
# --------------------------------------------------------------------------


def test_entropy_F_special_points():
    for s, expected in [(0.0, 1.0), (1.0, 0.0), (math.e, 1.0)]:
        val, _, _ = entropy_eval("F", s)
        assert val == pytest.approx(expected, abs=1e-14)


def test_entropy_F_rejects_negative():
    with pytest.raises(DomainError):
        entropy_eval("F", -1e-3)


def test_entropy_FL_quadratic_branch():
    val, d1, d2 = entropy_eval("FL", 4.0, L=2.0)
    assert val == pytest.approx(FL_AT_2L_L2, abs=1e-14)
    assert d1 == pytest.approx(4.0 / 2.0 + math.log(2.0) - 1.0, abs=1e-14)
    assert d2 == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("which,kwargs", [("FL", {"L": 3.0}),
                                          ("FLdelta", {"L": 3.0, "delta": 1e-3})])
def test_entropy_c2_matching_at_L(which, kwargs):
    L = kwargs["L"]
    h = 1e-7
    for col in range(3):
        below = entropy_eval(which, L - h, **kwargs)[col]
        above = entropy_eval(which, L + h, **kwargs)[col]
        assert abs(above - below) < 1e-5


def test_entropy_c2_matching_at_delta():
    delta = 1e-2
    h = 1e-9
    for col in range(3):
        below = entropy_eval("FLdelta", delta - h, L=3.0, delta=delta)[col]
        above = entropy_eval("FLdelta", delta + h, L=3.0, delta=delta)[col]
        assert abs(above - below) < 1e-5


def test_entropy_FLdelta_second_derivative_branches():
    L, delta = 3.0, 1e-2
    s = np.array([-1.0, 0.5 * delta, 0.1, 1.0, 10.0])
    _, _, d2 = entropy_eval("FLdelta", s, L=L, delta=delta)
    np.testing.assert_allclose(d2, [1 / delta, 1 / delta, 10.0, 1.0, 1 / L], rtol=1e-13)
    # and the reciprocal is exactly the two-sided cut-off
    np.testing.assert_allclose(1.0 / d2, cutoff_beta_delta(s, L, delta), rtol=1e-13)


def test_entropy_kind_validation():
    with pytest.raises(ValueError):
        entropy_eval("FL", 1.0)
    with pytest.raises(ValueError):
        entropy_eval("FLdelta", 1.0, L=3.0)
    with pytest.raises(ValueError):
        entropy_eval("G", 1.0)


# --------------------------------------------------------------------------
# cut-offs
# --------------------------------------------------------------------------


def test_cutoffs_pointwise():
    s = np.array([-0.5, 0.0, 1e-5, 0.5, 7.0])
    np.testing.assert_array_equal(cutoff_beta(s, 5.0), [-0.5, 0.0, 1e-5, 0.5, 5.0])
    np.testing.assert_array_equal(cutoff_beta_delta(s, 5.0, 1e-4),
                                  [1e-4, 1e-4, 1e-4, 0.5, 5.0])


def test_cutoff_params_validation():
    CutoffParams(L=5.0, delta=1e-4)
    with pytest.raises(ValueError):
        CutoffParams(L=0.5, delta=1e-4)
    with pytest.raises(ValueError):
        CutoffParams(L=5.0, delta=1.5)
    with pytest.raises(ValueError):
        CutoffParams(L=5.0, delta=0.0)


def test_secant_coefficient_chain_rule_exact():
    # coeff * ([F^L_d]'(c) - [F^L_d]'(a)) == c - a, the identity the
    # free-energy estimate rests on
    rng = np.random.default_rng(7)
    a = rng.uniform(1e-6, 8.0, size=200)
    c = rng.uniform(1e-6, 8.0, size=200)
    L, delta = 5.0, 1e-4
    coeff = secant_cutoff_coefficient(a, c, L, delta)
    d1a = entropy_eval("FLdelta", a, L=L, delta=delta)[1]
    d1c = entropy_eval("FLdelta", c, L=L, delta=delta)[1]
    np.testing.assert_allclose(coeff * (d1c - d1a), c - a, atol=1e-10)


def test_secant_coefficient_coincidence_limit():
    coeff = secant_cutoff_coefficient(0.7, 0.7, 5.0, 1e-4)
    assert coeff == pytest.approx(0.7, abs=1e-14)
    # saturated endpoints collapse to the cut-off values
    assert secant_cutoff_coefficient(9.0, 9.0, 5.0, 1e-4) == 5.0
    assert secant_cutoff_coefficient(0.0, 0.0, 5.0, 1e-4) == pytest.approx(1e-4)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-1.0, 10.0), c=st.floats(-1.0, 10.0))
def test_secant_coefficient_stays_in_band(a, c):
    coeff = float(secant_cutoff_coefficient(a, c, 5.0, 1e-4))
    assert 1e-4 <= coeff <= 5.0


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 50.0), t=st.floats(0.0, 50.0))
def test_entropy_FLdelta_is_convex(s, t):
    # monotone first derivative is the workable convexity statement here
    d1s = float(entropy_eval("FLdelta", s, L=5.0, delta=1e-4)[1])
    d1t = float(entropy_eval("FLdelta", t, L=5.0, delta=1e-4)[1])
    if s < t:
        assert d1s <= d1t + 1e-12
    val = float(entropy_eval("FLdelta", s, L=5.0, delta=1e-4)[0])
    assert val >= -1e-12


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.0, 100.0))
def test_entropy_F_nonnegative(s):
    assert float(entropy_eval("F", s)[0]) >= -1e-15
