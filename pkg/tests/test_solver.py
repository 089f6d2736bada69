import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degiorgi.errors import GeometryError, StabilityError, ValidationError
from degiorgi.exponents import classify
from degiorgi.fields import AnisotropicGrid, SpaceTimeField
from degiorgi.solver import (
    OperatorSpec, bump_test, gaussian, heat_gaussian, heat_gaussian_field, parse_initial, solve,
    stable_tau, weak_residual,
)

from oracles import heat_kernel_1d_periodic

HEAT = OperatorSpec.standard(2, 1.0, 2.0)


def box(n, T, nt, periodic=True, L=np.pi):
    return AnisotropicGrid.box((-L, -L), (L, L), (n, n), T, nt, periodic=periodic)


def test_spec_validation_names_axis():
    with pytest.raises(ValidationError, match="axis 1"):
        OperatorSpec("anisotropic_dnl", (1.0, 1.0), (2.0, 1.0))
    with pytest.raises(ValidationError, match="axis 0"):
        OperatorSpec("anisotropic_dnl", (0.0, 1.0), (2.0, 2.0))
    with pytest.raises(ValidationError):
        OperatorSpec("dnl_standard", (1.0, 2.0), (2.0, 2.0))
    with pytest.raises(ValidationError):
        OperatorSpec("heat", (1.0,), (2.0,))
    with pytest.raises(ValidationError):
        OperatorSpec("dnl_standard", (1.0,), (2.0,), bc="neumann")


def test_spec_dict_roundtrip():
    s = OperatorSpec("anisotropic_dnl", (1.0, 1.5), (2.0, 3.0), bc="homogeneous",
                     lo=(-1, -1), hi=(1, 1))
    assert OperatorSpec.from_dict(s.to_dict()) == s
    short = OperatorSpec.from_dict({"kind": "dnl_standard", "N": 3, "m": 1.0, "p": 2.0})
    assert short == OperatorSpec.standard(3, 1.0, 2.0)
    with pytest.raises(ValidationError):
        OperatorSpec.from_dict({"kind": "dnl_standard", "m": [1], "p": [2], "colour": 1})


def test_reference_kernel_matches_oracle():
    g = box(16, 0.1, 2)
    u = heat_gaussian(g, 0.1, 0.7)
    x = g.axis(0)
    k = np.array([heat_kernel_1d_periodic(v, 0.1, 0.7, 2 * np.pi) for v in x])
    assert np.allclose(u, np.outer(k, k), rtol=1e-12, atol=1e-15)


def test_constant_stays_constant():
    g = box(12, 0.1, 5)
    out = solve(HEAT, np.full(g.extents, 0.4), 0.1, g)
    assert np.all(out.samples == 0.4)
    aniso = OperatorSpec("anisotropic_dnl", (1.0, 1.0), (2.0, 3.0))
    assert np.all(solve(aniso, np.full(g.extents, 0.4), 0.1, g).samples == 0.4)


def test_periodic_mass_conservation():
    g = box(24, 0.2, 11)
    spec = OperatorSpec("anisotropic_dnl", (1.0, 2.0), (2.0, 3.0))
    u0 = gaussian(g, 0.8, 1.0)
    out = solve(spec, u0, 0.2, g, substeps=20)
    mass = np.array(out.metadata["mass"])
    assert np.all(np.abs(np.diff(mass)) <= 1e-10 * mass[0] * out.metadata["substeps"])
    assert out.metadata["clip_events"] == 0


def test_heat_refinement_second_order():
    errs = []
    for n, nt in ((16, 16), (32, 64), (64, 256)):
        g = box(n, 0.1, nt)
        out = solve(HEAT, heat_gaussian(g, 0.0, 1.0), 0.1, g)
        errs.append(np.abs(out.samples[-1] - heat_gaussian(g, 0.1, 1.0)).max())
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_unstable_step_refused_with_suggestion():
    g = box(32, 1.0, 3)
    with pytest.raises(StabilityError) as err:
        solve(HEAT, heat_gaussian(g, 0.0, 1.0), 1.0, g)
    tau = err.value.suggested_tau
    assert 0 < tau < stable_tau(HEAT, heat_gaussian(g, 0.0, 1.0), g.spacings)


def test_bad_inputs():
    g = box(8, 0.1, 3)
    with pytest.raises(ValidationError):
        solve(HEAT, -np.ones(g.extents), 0.1, g)
    with pytest.raises(ValidationError):
        solve(HEAT, np.full(g.extents, np.nan), 0.1, g)
    with pytest.raises(ValidationError):
        solve(HEAT, np.ones((4, 4)), 0.1, g)
    with pytest.raises(ValidationError):
        solve(OperatorSpec.standard(3, 1.0, 2.0), np.ones(g.extents), 0.1, g)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 2 ** 31))
def test_heat_comparison_under_scaling(c, seed):
    g = box(12, 0.05, 6)
    u0 = np.random.default_rng(seed).uniform(0, 1, g.extents)
    full = solve(HEAT, u0, 0.05, g, substeps=4).samples
    scaled = solve(HEAT, c * u0, 0.05, g, substeps=4).samples
    assert np.all(scaled <= full + 1e-14)


def test_homogeneous_boundary_held_at_zero():
    spec = OperatorSpec.standard(2, 1.0, 2.0, bc="homogeneous")
    g = box(21, 0.1, 6, periodic=False, L=1.0)
    out = solve(spec, np.ones(g.extents), 0.1, g, substeps=20)
    u = out.samples
    assert np.all(u[:, 0, :] == 0) and np.all(u[:, -1, :] == 0)
    assert np.all(u[:, :, 0] == 0) and np.all(u[:, :, -1] == 0)
    assert np.all(u >= 0) and out.metadata["mass"][-1] < out.metadata["mass"][0]


def test_degenerate_instance_steps_and_classifies():
    spec = OperatorSpec.standard(2, 1.0, 3.0)
    assert classify(spec.config()).diffusion == "degenerate"
    g = box(24, 0.5, 6)
    u0 = heat_gaussian(g, 0.0, 1.0)
    sub = int(np.ceil(0.1 / stable_tau(spec, u0, g.spacings) * 1.3))
    out = solve(spec, u0, 0.5, g, substeps=sub)
    assert np.all(out.samples >= 0)
    mass = out.metadata["mass"]
    assert max(mass) - min(mass) <= 1e-10 * mass[0] * sub * 5
    assert out.samples[-1].max() < u0.max()


def test_parse_initial():
    assert parse_initial("gaussian:0.5,2") == (0.5, 2.0)
    assert parse_initial("field.pdgf") is None
    with pytest.raises(ValidationError):
        parse_initial("gaussian:x")


def test_weak_residual_constant_is_zero():
    g = box(24, 0.2, 9)
    f = SpaceTimeField(g, np.full(g.shape, 0.7))
    tests = [bump_test(g, (0.0, 0.0), (1.5, 1.5), lambda t: t)]
    assert weak_residual(f, HEAT, tests) <= 1e-13


def test_weak_residual_rejects_boundary_support():
    g = box(16, 0.2, 5)
    f = SpaceTimeField(g, np.ones(g.shape))
    with pytest.raises(GeometryError):
        weak_residual(f, HEAT, [np.ones(g.shape)])
    with pytest.raises(ValidationError):
        weak_residual(f, HEAT, [])


def test_weak_residual_heat_shrinks():
    vals = []
    for n, nt in ((16, 17), (32, 33), (64, 65)):
        g = box(n, 0.5, nt)
        f = heat_gaussian_field(g, 1.0)
        tests = [bump_test(g, (0.3, -0.2), (1.2, 1.5), lambda t: 1 + t),
                 bump_test(g, (-0.5, 0.4), (1.0, 0.8))]
        vals.append(weak_residual(f, HEAT, tests))
    ratios = [a / b for a, b in zip(vals, vals[1:])]
    assert all(3.0 <= r <= 5.0 for r in ratios), ratios
