"""Quadrature oracles: partition functions, Gibbs expectations, and the
conditional/integral identities, checked against independently frozen
values and exact reductions.

Frozen references (s = 1/2, d = 1, unit density):
    Z_2(beta=1)   = 1.580442354987690    +- 1e-9
    E[H_2](beta=1)= -0.603803642204677   +- 1e-9
both obtained from a midpoint resolution ladder cross-checked against
adaptive Gauss-Kronrod integration of the tabulated interaction; the two
methods agree to 1.7e-11.
"""
import numpy as np
import pytest

from rieszlab import AccuracyError, Window
from rieszlab.oracle import (
    SCHEME_MIDPOINT,
    SCHEME_PANEL,
    OracleValue,
    QuadratureSpec,
    dlr_residual,
    exact_expectation,
    exact_partition,
    gnz_residual,
)
from rieszlab.potential import RieszParams

Z2_BETA1 = 1.580442354987690
EH2_BETA1 = -0.603803642204677


def test_quadrature_spec_gates():
    with pytest.raises(ValueError):
        QuadratureSpec(scheme="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(points_per_axis=1)
    spec = QuadratureSpec()
    assert spec.scheme == SCHEME_MIDPOINT
    assert spec.reported_tolerance is None


def test_partition_gates(params):
    with pytest.raises(ValueError):
        exact_partition(params, 5, 1.0)
    with pytest.raises(ValueError):
        exact_partition(params, 2, -0.5)
    with pytest.raises(NotImplementedError):
        exact_partition(RieszParams(d=2, s=1.5), 2, 1.0)


def test_partition_trivial_reductions(params, pot2, pot3):
    # single particle: H = 0, Z = 1 for every beta
    assert float(exact_partition(params, 1, 3.7)) == pytest.approx(1.0, abs=1e-14)
    # beta = 0: the n-fold uniform normalization is exactly 1
    for n, pot in ((2, pot2), (3, pot3)):
        z = exact_partition(params, n, 0.0, pot=pot)
        assert float(z) == pytest.approx(1.0, abs=1e-12)


def test_partition_two_particles_frozen(params, pot2):
    z = exact_partition(params, 2, 1.0, tol=1e-8, pot=pot2)
    assert isinstance(z, OracleValue)
    assert abs(float(z) - Z2_BETA1) <= 2e-9
    assert 0.0 < z.tolerance <= 1e-8


def test_partition_reports_ladder_tolerance(params, pot2):
    spec = QuadratureSpec(points_per_axis=32)
    z = exact_partition(params, 2, 1.0, spec, tol=1e-6, pot=pot2)
    assert spec.reported_tolerance == z.tolerance
    # the reported ladder agreement really bounds the error here
    assert abs(float(z) - Z2_BETA1) <= z.tolerance


def test_partition_unreachable_tolerance_raises(params, pot2):
    with pytest.raises(AccuracyError):
        exact_partition(params, 2, 1.0, tol=1e-16, pot=pot2)


def test_expectation_mean_energy_frozen(params, pot2):
    def mean_energy(block):
        return np.atleast_1d(pot2.eval(block[:, 0] - block[:, 1]))

    e = exact_expectation(mean_energy, params, 2, 1.0, tol=1e-8, pot=pot2)
    assert abs(float(e) - EH2_BETA1) <= 2e-9


def test_expectation_beta_zero_iid(params, pot2):
    # cos^2(pi x) integrates to 1/2 against the uniform law, and the
    # equispaced rule resolves the second harmonic exactly
    e = exact_expectation(
        lambda b: np.cos(np.pi * b[:, 0]) ** 2, params, 2, 0.0, tol=1e-10, pot=pot2
    )
    assert abs(float(e) - 0.5) <= 1e-13


def test_expectation_gates(params):
    with pytest.raises(ValueError):
        exact_expectation(lambda b: b[:, 0], params, 4, 1.0)


def test_midpoint_rejects_panel_breaks(params, pot2):
    with pytest.raises(ValueError, match="panel breaks"):
        exact_expectation(
            lambda b: b[:, 0], params, 2, 0.0, pot=pot2, breaks=(0.25,)
        )


def test_dlr_requires_panel_scheme(params, pot2):
    win = Window.centered(1, 0.8)
    bad = QuadratureSpec(points_per_axis=8, scheme=SCHEME_MIDPOINT)
    with pytest.raises(ValueError, match="panel-gauss-legendre"):
        dlr_residual(lambda b: b[:, 0], params, 2, 1.0, win, quad=bad)


def _windowed_first_moment(win):
    lo, hi = win.lower[0], win.upper[0]

    def f(block):
        inside = (block >= lo) & (block < hi)
        return np.sum(np.cos(np.pi * block) * inside, axis=1)

    return f


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_dlr_restricted_grid_is_rounding_level(params, pot2, beta):
    # inner integral restricted to the outer nodes: exact by construction
    win = Window.centered(1, 0.8)
    res = dlr_residual(
        _windowed_first_moment(win), params, 2, beta, win, pot=pot2
    )
    assert abs(float(res)) <= 1e-12


def test_dlr_independent_inner_rule(params, pot2):
    # a genuinely independent inner rule turns the identity into a
    # numerical statement; the residual must still clear the contract
    win = Window.centered(1, 0.8)
    res = dlr_residual(
        _windowed_first_moment(win),
        params,
        2,
        1.0,
        win,
        inner_quad=QuadratureSpec(points_per_axis=6, scheme=SCHEME_PANEL),
        pot=pot2,
    )
    assert abs(float(res)) <= 1e-4


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_gnz_two_particles(params, pot2, beta):
    res = gnz_residual(
        lambda x, rest: np.cos(np.pi * np.asarray(x)), params, 2, beta, pot=pot2
    )
    assert abs(float(res)) <= 1e-4


def test_gnz_single_particle(params):
    res = gnz_residual(
        lambda x, rest: np.cos(2.0 * np.pi * np.asarray(x)), params, 1, 1.0
    )
    assert abs(float(res)) <= 1e-10


def test_cross_scheme_agreement(params, pot3):
    # two unrelated rules bracket the same number
    mid = exact_partition(params, 3, 1.0, tol=1e-6, pot=pot3)
    gl = exact_partition(
        params,
        3,
        1.0,
        QuadratureSpec(points_per_axis=32, scheme=SCHEME_PANEL),
        tol=1e-4,
        pot=pot3,
    )
    assert abs(float(mid) - float(gl)) <= mid.tolerance + gl.tolerance
