from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import fresnel

from conftest import dense_evolution, potentials, random_potential
from perdisp.bloch import band_derivatives, band_path, delta_V
from perdisp.potential import PeriodicPotential
from perdisp.propagator import (
    BlochQuadrature,
    WavePacket,
    band_phase_checks,
    dispersive_constant,
    interpolated_bound,
    kernel_integral,
    panel_count,
    propagator_entries,
    propagator_entry,
    split_site,
    stationary_partition,
    van_der_corput_constant,
    vdc_bound_check,
)

FREE = PeriodicPotential([0.0])
J0_2 = 0.22389077914123566805            # sum_m (-1)^m / (m!)^2
CUBIC_LHS = 0.089443224575533847323      # |int_0^1 e^{1000 i x^3} dx|, incomplete gamma
M_FREE = 165.60393984523917474           # 18 / (2^{1/3} pi) * 5 (1 + 2 pi), delta clamped to 1


def one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def random_packet(rng, width=4, lo=-10, hi=10):
    n = int(rng.integers(1, width + 1))
    start = int(rng.integers(lo, hi - n + 1))
    return WavePacket(start, rng.normal(size=n) + 1j * rng.normal(size=n))


# --- wave packets -----------------------------------------------------------


@given(st.integers(-50, 50), st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False,
                                                          allow_infinity=False), min_size=1, max_size=30))
def test_packet_norm_ordering(offset, amps):
    psi = WavePacket(offset, amps)
    assert psi.linf <= psi.l2 * (1 + 1e-12) + 1e-300
    assert psi.l2 <= psi.l1 * (1 + 1e-12) + 1e-300
    assert psi.last - psi.first + 1 == len(amps)


def test_split_site():
    m, ell = split_site(np.array([1, 3, 4, 0, -2]), 3)
    assert m.tolist() == [1, 3, 1, 3, 1]
    assert ell.tolist() == [0, 0, 1, -1, -1]
    assert (m + 3 * ell).tolist() == [1, 3, 4, 0, -2]


# --- stationary partition ---------------------------------------------------


def test_free_partition_matches_threshold():
    f = band_path(FREE)
    part = stationary_partition(FREE, f, 2.0)
    k2 = part.components(1, "K2")
    expected = [(-math.pi, -2 * math.pi / 3), (-math.pi / 3, math.pi / 3), (2 * math.pi / 3, math.pi)]
    assert len(k2) == 3 and part.count(1, "K3") == 2
    np.testing.assert_allclose(k2, expected, atol=1e-12)
    assert part.left_endpoints(1)[0] == -math.pi


@pytest.mark.parametrize("values", [[1.0, 0.0], [0.3, -1.2, 0.7], [0.0, 0.0, 0.0]])
def test_partition_covers_zone_and_is_symmetric(values):
    V = PeriodicPotential(values)
    p = V.period
    f = band_path(V)
    d = delta_V(V, f)
    part = stationary_partition(V, f, d)
    for j in range(1, p + 1):
        iv = part.intervals[j - 1]
        assert abs(iv[0][0] + math.pi / p) < 1e-15 and abs(iv[-1][1] - math.pi / p) < 1e-15
        for (a, b, _), (c, _, _) in zip(iv[:-1], iv[1:]):
            assert b == c
        labs = [lab for _, _, lab in iv]
        assert labs == labs[::-1]
        ends = np.array([[a, b] for a, b, _ in iv])
        np.testing.assert_allclose(ends, -ends[::-1, ::-1], atol=1e-14)
        # each K3 sample has a large third derivative
        for a, b, lab in iv:
            if lab != "K3":
                continue
            for k in np.linspace(a, b, 25):
                E = band_derivatives(V, j, abs(k), f.portrait)
                assert abs(E[2]) >= d / 2 * (1 - 1e-9)


# --- van der Corput ---------------------------------------------------------


def test_van_der_corput_constants():
    assert [van_der_corput_constant(k) for k in (2, 3, 4)] == [8, 18, 38]
    with pytest.raises(ValueError):
        van_der_corput_constant(1)


def test_vdc_cubic_phase():
    res = vdc_bound_check(lambda x: x ** 3, 3, 6.0, one, zero, 1000.0, 0.0, 1.0)
    assert abs(res.rhs - 18 * 6 ** (-1 / 3) * 0.1) < 1e-12
    assert abs(res.lhs - CUBIC_LHS) < 1e-9
    assert res.passed


def test_vdc_quadratic_phase_against_fresnel():
    lam = 100.0
    w = math.sqrt(lam / math.pi)
    S, C = fresnel(w)
    exact = abs(2 * math.sqrt(math.pi / lam) * complex(C, S))
    res = vdc_bound_check(lambda x: x ** 2 / 2, 2, 1.0, one, zero, lam, -1.0, 1.0)
    assert abs(res.lhs - exact) < 1e-9
    assert abs(res.rhs - 0.8) < 1e-12
    assert res.passed


@given(st.floats(10, 2000))
def test_vdc_frequency_sign_symmetry(lam):
    a = vdc_bound_check(lambda x: x ** 3, 3, 6.0, one, zero, lam, 0.0, 1.0)
    b = vdc_bound_check(lambda x: x ** 3, 3, 6.0, one, zero, -lam, 0.0, 1.0)
    assert abs(a.lhs - b.lhs) <= 1e-10 and a.rhs == b.rhs


def test_band_phase_checks_period_two():
    V = PeriodicPotential([1.0, 0.0])
    f = band_path(V)
    part = stationary_partition(V, f, delta_V(V, f))
    checks = band_phase_checks(V, f, part, 1e3, m=1, q=2, d=1)
    assert len(checks) == 10
    assert all(res.passed for _, _, res in checks)


# --- kernel and propagator entries ------------------------------------------


@pytest.mark.parametrize("values", [[0.0], [1.0, 0.0], [0.3, -1.2, 0.7], [0.5, 0.0, -0.5, 1.0]])
def test_kernel_at_time_zero_is_identity(values):
    V = PeriodicPotential(values)
    p = V.period
    for m in range(1, p + 1):
        for q in range(1, p + 1):
            for d in (-2, 0, 1):
                s = sum(kernel_integral(V, j, m, q, d, 0.0) for j in range(1, p + 1))
                assert abs(s - (m == q and d == 0)) < 1e-12


def test_free_kernel_is_bessel():
    assert abs(abs(kernel_integral(FREE, 1, 1, 1, 0, 1.0)) - J0_2) < 1e-12
    assert abs(abs(propagator_entry(FREE, WavePacket.delta(0), 0, 1.0)) - J0_2) < 1e-12


def test_kernel_refinement_contract(rng):
    V = random_potential(rng, 3)
    vmax = band_path(V).max_velocity
    for t in (1.0, 50.0, 200.0):
        for d in (0, 3, -7):
            n = panel_count(t, d, 3, vmax)
            for j in (1, 2, 3):
                a = kernel_integral(V, j, 1, 2, d, t, panels=n)
                b = kernel_integral(V, j, 1, 2, d, t, panels=2 * n)
                assert abs(a - b) < 1e-8


def test_propagator_entry_at_time_zero(rng):
    V = random_potential(rng, 3)
    psi = random_packet(rng)
    for n in range(psi.first - 2, psi.last + 3):
        assert abs(propagator_entry(V, psi, n, 0.0) - psi.value_at(n)) < 1e-10


def test_propagator_entry_matches_lattice(rng):
    V = random_potential(rng, 3)
    for t in (1.0, 5.0, 20.0):
        psi = random_packet(rng)
        ref = dense_evolution(V, psi.sites, psi.amplitudes, t, 150)
        for n in rng.integers(-40, 41, 8):
            assert abs(propagator_entry(V, psi, int(n), t) - ref[int(n)]) < 1e-6


@given(potentials(1, 4), st.floats(0.0, 20.0), st.integers(0, 2 ** 31))
def test_vectorised_entries_agree_with_band_sums(V, t, seed):
    rng = np.random.default_rng(seed)
    psi = random_packet(rng, width=3, lo=-5, hi=5)
    ns = np.arange(-8, 9)
    vec = propagator_entries(V, psi, ns, t)
    lit = np.array([propagator_entry(V, psi, int(n), t) for n in ns[::4]])
    assert np.max(np.abs(vec[::4] - lit)) < 1e-10


@given(potentials(1, 4), st.floats(0.0, 20.0))
def test_unitarity_through_representation(V, t):
    psi = WavePacket(-1, [0.6, -0.3j, 0.2])
    r = int(math.ceil(2 * t)) + 20 + 12 * int(math.ceil(t ** (1 / 3)))
    ns = np.arange(psi.first - r, psi.last + r + 1)
    vals = propagator_entries(V, psi, ns, t)
    assert abs(np.sum(np.abs(vals) ** 2) - psi.l2 ** 2) < 1e-6


# --- dispersive constant ----------------------------------------------------


def test_free_dispersive_constant():
    dc = dispersive_constant(FREE)
    assert dc.delta == pytest.approx(2.0, abs=1e-9)
    assert dc.delta_used == 1.0
    assert dc.counts == [{"K2": 3, "K3": 2}]
    assert dc.C_V == pytest.approx(5 * (1 + 2 * math.pi), rel=1e-12)
    assert dc.M_V == pytest.approx(M_FREE, rel=1e-12)


def test_constant_first_branch_scales_like_inverse_root_delta():
    dc = dispersive_constant(PeriodicPotential([1.0, 3.0, -2.0]))
    branch = lambda d: 3 * 18 / (2 ** (1 / 3) * math.pi) * dc.C_V * min(d, 1.0) ** -0.5
    d = dc.delta_used
    assert branch(d / 4) == pytest.approx(2 * branch(d), rel=1e-14)
    assert dc.M_V == pytest.approx(max(branch(dc.delta), 2 ** (1 / 6)), rel=1e-14)


@pytest.mark.filterwarnings("ignore::perdisp.errors.ContinuationWarning")
@given(potentials(1, 4))
def test_constant_floor_and_positivity(V):
    dc = dispersive_constant(V)
    assert dc.M_V >= 2 ** (1 / 6)
    assert dc.C_V > 0 and np.all(dc.C_Vj > 0)
    assert all(c["K2"] + c["K3"] >= 1 for c in dc.counts)


def test_interpolated_bound_limits():
    M = 37.0
    assert interpolated_bound(M, 4 / 3, 0.0) == pytest.approx(math.sqrt(M), rel=1e-14)
    assert interpolated_bound(M, 2 - 1e-12, 5.0) == pytest.approx(1.0, abs=1e-9)
    assert interpolated_bound(M, 1 + 1e-12, 8.0) == pytest.approx(M * 65 ** (-1 / 6), rel=1e-9)
    with pytest.raises(ValueError):
        interpolated_bound(M, 2.0, 1.0)


def test_theorem_bound_holds_for_representation(rng):
    V = random_potential(rng, 3)
    dc = dispersive_constant(V)
    psi = random_packet(rng)
    ns = np.arange(-80, 81)
    for t in (0.0, 3.0, 17.0, 40.0):
        vals = propagator_entries(V, psi, ns, t)
        assert np.max(np.abs(vals)) <= dc.bound(t) * psi.l1


def test_quadrature_nodes_cover_zone():
    q = BlochQuadrature(PeriodicPotential([1.0, 0.0]), 64)
    assert q.k.min() > -math.pi / 2 and q.k.max() < math.pi / 2
    assert q.w.sum() == pytest.approx(math.pi, rel=1e-14)
