import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from degiorgi.bounds import (
    PROOF_FORM, THEOREM_FORM, BoundInputs, CylinderGeometry, bound_report, h_factor,
    iteration_epsilon, level_threshold_k, radius_term, sup_bound_subcritical,
    sup_bound_supercritical, supercritical_exponent,
)
from degiorgi.errors import DomainError, RegimeError, ValidationError
from degiorgi.exponents import ExponentConfig, classify, derive_indices, kappa_s

from oracles import h_oracle, indices_exact, radius_oracle
from strategies import configs


def iso(N, m, p):
    return ExponentConfig.isotropic(N, m, p)


def geom(N, rho=1.0, theta=1.0):
    rho = (rho,) * N if np.ndim(rho) == 0 else rho
    return CylinderGeometry((0.0,) * N, 0.0, rho, theta)


def oracle_terms(cfg, g):
    d = derive_indices(cfg)
    args = (d.lambda_i, d.Lambda_i, cfg.p, cfg.q, g.rho, g.theta)
    try:
        return radius_oracle(*args), h_oracle(*args)
    except OverflowError:
        assume(False)


def test_radius_singular_example():
    assert radius_term(iso(3, 0.5, 2), geom(3)) == pytest.approx(6.0)


def test_radius_limiting_all_equal_is_zero():
    assert radius_term(iso(3, 1, 2), geom(3, 0.7, 0.3)) == 0.0


def test_radius_degenerate_example():
    assert radius_term(iso(2, 1, 3), geom(2, (1.0, 2.0))) == pytest.approx(18.0)


def test_radius_degenerate_mixed_axes():
    cfg = ExponentConfig(2, (1, 1), (1, 1), (2, 3), (2, 3))
    g = geom(2, (1.0, 0.3), 0.2)
    rho2 = 0.3 ** 3
    assert radius_term(cfg, g) == pytest.approx(2 * rho2 / 0.2 + 2 * rho2 / 1.0)
    assert h_factor(cfg, g) == pytest.approx(2 / rho2)


def test_h_examples():
    assert h_factor(iso(3, 0.5, 2), geom(3, theta=0.5)) == pytest.approx(2.0)
    assert h_factor(iso(3, 1, 2), geom(3)) == pytest.approx(7.0)
    assert h_factor(iso(2, 1, 3), geom(2, (1.0, 2.0))) == pytest.approx(2.25)


def test_supercritical_mass_zero_and_heat_value():
    cfg, g = iso(3, 1, 2), geom(3)
    assert sup_bound_supercritical(BoundInputs(cfg, g, 0.0)) == radius_term(cfg, g)
    assert supercritical_exponent(cfg) == pytest.approx(0.5)
    # H = 7, H^{(N+p)/p} = 7^{5/2}, outer power 1/2, R = 0
    assert sup_bound_supercritical(BoundInputs(cfg, g, 1.0)) == pytest.approx(7 ** 1.25, rel=1e-13)


def test_supercritical_rejects_other_regimes():
    with pytest.raises(RegimeError):
        sup_bound_supercritical(BoundInputs(iso(3, 1, 1.1), geom(3), 1.0))


def test_singular_theta_power_shape():
    cfg = iso(3, 0.5, 2)
    d = derive_indices(cfg)
    for theta in (0.5, 1.0, 3.0):
        g = geom(3, theta=theta)
        main = sup_bound_supercritical(BoundInputs(cfg, g, 1.0)) - radius_term(cfg, g)
        expect = (theta ** (-(d.N + d.p) / d.p)) ** supercritical_exponent(cfg)
        assert main == pytest.approx(expect, rel=1e-12)


@given(st.integers(1, 4), st.floats(0.2, 2.0), st.floats(0.01, 0.99))
def test_printed_singular_exponent_reduces_when_L_is_one(N, m, frac):
    # p chosen so that m(p-1) < 1, hence L = 1
    cfg = iso(N, m, 1.0 + frac / m)
    d = derive_indices(cfg)
    assume(d.M > d.L + 1e-6)
    printed = d.p / ((d.m + 1) * d.p + d.N * (d.p * d.lambda_over_p - 1))
    assert supercritical_exponent(cfg) == pytest.approx(printed, rel=1e-12)
    assert printed == pytest.approx(d.p / ((d.M - d.L) * d.N), rel=1e-12)


def test_subcritical_example_on_singular_config():
    # the example config is supercritical, so the regime gate is lifted
    cfg, g = iso(3, 0.5, 2), geom(3)
    inputs = BoundInputs(cfg, g, 1.0, s=2.0)
    assert kappa_s(cfg, 2.0) == pytest.approx(2.5)
    R = radius_term(cfg, g)
    assert R == pytest.approx(6.0)
    for form in (PROOF_FORM, THEOREM_FORM):
        assert sup_bound_subcritical(inputs, form=form, check_regime=False) == pytest.approx(1 + R)
    with pytest.raises(RegimeError):
        sup_bound_subcritical(inputs)


def test_subcritical_mass_zero_and_kappa_guard():
    cfg, g = iso(3, 1, 1.1), geom(3, 0.8, 0.5)
    rep = classify(cfg)
    assert sup_bound_subcritical(BoundInputs(cfg, g, 0.0, s=4.0)) == radius_term(cfg, g)
    with pytest.raises(DomainError):
        sup_bound_subcritical(BoundInputs(cfg, g, 1.0, s=rep.s_min - 0.1 if rep.s_min > 2.1 else 2.05))


def test_subcritical_diverges_towards_s_min():
    cfg, g = iso(3, 1, 1.1), geom(3, 0.8, 0.5)
    s_min = classify(cfg).s_min
    ss = s_min + np.array([2.0, 1.0, 0.5, 0.2, 0.1, 0.05])
    vals = [sup_bound_subcritical(BoundInputs(cfg, g, 3.0, s=s)) for s in ss if s > 2.0]
    assert len(vals) >= 4
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_proof_and_theorem_forms_differ_by_h_power():
    cfg, g = iso(3, 1, 1.1), geom(3, 0.8, 0.5)
    s, mass = 4.0, 2.0
    d, kap, H = derive_indices(cfg), kappa_s(cfg, 4.0), h_factor(cfg, g)
    R = radius_term(cfg, g)
    th = sup_bound_subcritical(BoundInputs(cfg, g, mass, s), form=THEOREM_FORM) - R
    pr = sup_bound_subcritical(BoundInputs(cfg, g, mass, s), form=PROOF_FORM) - R
    assert th == pytest.approx((H * mass) ** (d.p / kap))
    assert pr == pytest.approx(H ** ((d.N + d.p) / kap) * mass ** (d.p / kap))


def test_epsilon_examples():
    cfg = iso(3, 1, 1.1)
    rep = iteration_epsilon(cfg, 4.0)
    ref = indices_exact(3, [F(1)] * 3, [F(1)] * 3, [F(11, 10)] * 3, [F(11, 10)] * 3)
    s = F(4)
    eps = (s - ref["m"] - ref["L"]) / (s - ref["m"] * ref["p_star"])
    assert rep.epsilon == pytest.approx(float(eps), abs=1e-13)
    assert 0 < rep.epsilon < 1
    assert rep.identity_lhs == pytest.approx(rep.identity_rhs, abs=1e-12)
    with pytest.raises(DomainError):
        iteration_epsilon(cfg, 1.0 + 1.0)  # s = m + L gives epsilon = 0
    with pytest.raises(RegimeError):
        iteration_epsilon(iso(2, 1, 2), 4.0)


@settings(max_examples=50)
@given(st.floats(1.02, 1.19), st.integers(3, 5), st.floats(0.1, 6.0))
def test_epsilon_identity_random(p, N, extra):
    cfg = iso(N, 1.0, p)
    assume(classify(cfg).criticality == "subcritical")
    d = derive_indices(cfg)
    s = max(classify(cfg).s_min, d.m * d.p_star, d.m + 1) + extra
    rep = iteration_epsilon(cfg, s)
    assert rep.identity_lhs == pytest.approx(rep.identity_rhs, abs=1e-12)


def test_level_threshold_examples():
    cfg, g = iso(3, 1, 2), geom(3)
    assert level_threshold_k(BoundInputs(cfg, g, 0.0), 0.0) == 0.0
    k = level_threshold_k(BoundInputs(cfg, g, 1.0), 1.0)
    bound = sup_bound_supercritical(BoundInputs(cfg, g, 1.0))
    assert k == pytest.approx(bound - radius_term(cfg, g), rel=1e-13)


def test_level_threshold_subcritical_rewrite():
    cfg, g = iso(3, 1, 1.1), geom(3, 0.8, 0.5)
    s, y0, gamma = 4.0, 2.5, 1.7
    d, kap, H = derive_indices(cfg), kappa_s(cfg, s), h_factor(cfg, g)
    k = level_threshold_k(BoundInputs(cfg, g, y0, s), y0, gamma)
    dd = y0 ** (1 / s)
    assert k == pytest.approx(gamma * dd ** (s * d.p / kap) * H ** ((d.N + d.p) / kap), rel=1e-11)


def test_bound_report_fields():
    rep = bound_report(iso(2, 1, 2), geom(2), 1.0)
    assert rep["theorem"] == "supercritical" and rep["R"] == 0.0
    rep2 = bound_report(iso(3, 1, 1.1), geom(3), 1.0, s=4.0, form=THEOREM_FORM)
    assert rep2["form"] == THEOREM_FORM and rep2["exponents"]["kappa_s"] > 0


def test_geometry_helpers(tmp_path):
    g = CylinderGeometry((0.0, 1.0), 2.0, (1.0, 0.5), 0.4)
    h = g.scaled(0.5, 0.5)
    assert h.center_t == 2.0 and h.rho == (0.5, 0.25) and h.theta == pytest.approx(0.2)
    assert g.contains(h, strict=True) and not h.contains(g)
    path = tmp_path / "g.json"
    path.write_text(__import__("json").dumps(g.to_dict()))
    assert CylinderGeometry.load(path) == g
    with pytest.raises(ValidationError):
        CylinderGeometry((0.0,), 0.0, (0.0,), 1.0)
    with pytest.raises(ValidationError):
        radius_term(iso(3, 1, 2), geom(2))


# -- properties --------------------------------------------------------------

radii = st.floats(0.2, 3.0)


@settings(max_examples=200)
@given(configs(), st.lists(radii, min_size=4, max_size=4), radii)
def test_branches_against_oracle(cfg, rho, theta):
    g = geom(cfg.N, tuple(rho[:cfg.N]), theta)
    R, H = oracle_terms(cfg, g)
    assert radius_term(cfg, g) == pytest.approx(R, rel=1e-12)
    assert h_factor(cfg, g) == pytest.approx(H, rel=1e-12)


@pytest.mark.parametrize("cfg", [
    ExponentConfig(2, (1, 1), (1, 1), (2, 2), (2, 2)),       # limiting, all equal
    ExponentConfig(2, (0.5, 1), (0.5, 1), (2, 2), (2, 2)),   # limiting, one axis below
    ExponentConfig(3, (1, 1, 2), (1, 1, 2), (2, 3, 2), (2, 3, 2)),  # degenerate, ties
])
def test_exact_tie_branches_against_oracle(cfg):
    g = geom(cfg.N, (0.7, 1.3, 0.9)[:cfg.N], 0.6)
    R, H = oracle_terms(cfg, g)
    assert radius_term(cfg, g) == pytest.approx(R, rel=1e-12)
    assert h_factor(cfg, g) == pytest.approx(H, rel=1e-12)


@given(configs(), st.floats(0.0, 10.0), st.floats(0.0, 10.0), radii)
def test_bounds_monotone_in_mass(cfg, a, b, theta):
    lo, hi = sorted((a, b))
    g = geom(cfg.N, 1.0, theta)
    rep = classify(cfg)
    if rep.criticality == "supercritical":
        f = lambda m: sup_bound_supercritical(BoundInputs(cfg, g, m))
    else:
        s = max(rep.s_min, derive_indices(cfg).m + 1) + 1.0
        f = lambda m: sup_bound_subcritical(BoundInputs(cfg, g, m, s))
    assert f(lo) <= f(hi) * (1 + 1e-14)


@given(st.floats(0.2, 0.9), st.floats(0.05, 0.95), st.integers(2, 4), st.floats(0.1, 5.0))
def test_bound_monotone_in_h_singular(m, frac, N, theta):
    cfg = iso(N, m, 1.0 + frac / m)
    assume(classify(cfg).criticality == "supercritical")
    # H = 1/theta here: smaller theta, larger H, larger main term
    f = lambda th: level_threshold_k(BoundInputs(cfg, geom(N, 1.0, th), 1.0), 1.0)
    assert f(theta) <= f(theta / 2) * (1 + 1e-14)


@given(st.floats(0.2, 0.9), st.floats(0.05, 0.95), st.integers(2, 4), st.floats(0.1, 5.0),
       st.floats(0.1, 10.0))
def test_singular_theta_doubling_scaling(m, frac, N, theta, mass):
    cfg = iso(N, m, 1.0 + frac / m)
    assume(classify(cfg).criticality == "supercritical")
    d = derive_indices(cfg)

    # the level threshold is the H-contribution alone (checked against the bound above)
    def main(th):
        g = geom(N, 1.0, th)
        return level_threshold_k(BoundInputs(cfg, g, mass), mass)

    assume(math.isfinite(main(theta)) and main(2 * theta) > 0)
    ratio = main(2 * theta) / main(theta)
    assert ratio == pytest.approx(2 ** (-(d.N + d.p) / ((d.M - d.L) * d.N)), rel=1e-10)


def test_near_critical_bound_saturates_to_inf():
    cfg = iso(2, 0.7890625, 1.0 + 0.05 / 0.7890625)
    assert classify(cfg).criticality == "supercritical"
    k = level_threshold_k(BoundInputs(cfg, geom(2, 1.0, 0.5), 1.0), 1.0)
    assert k == math.inf
    assert sup_bound_supercritical(BoundInputs(cfg, geom(2, 1.0, 0.5), 1.0)) == math.inf
