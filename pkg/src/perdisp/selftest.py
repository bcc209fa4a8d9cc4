"""A quick, deterministic battery of exact identities and cross-checks.

Each row is (check name, measured deviation, tolerance, passed).  The
battery runs on the configured potential and on one seeded random
potential of period 3.
"""
from __future__ import annotations

import math

import numpy as np

from . import bloch, evolve, mo_map, potential, propagator


def _identity_rows(V: potential.PeriodicPotential, tag: str, rng: np.random.Generator):
    p = V.period
    pt = potential.spectral_portrait(V)
    rows = []
    zs = rng.uniform(-3, 3, 8) + 1j * rng.uniform(-1, 1, 8)
    rows.append((f"{tag}:det_monodromy",
                 max(abs(np.linalg.det(potential.monodromy(V, z)) - 1) for z in zs), 1e-12))
    rows.append((f"{tag}:trace_discriminant",
                 max(abs(np.trace(potential.monodromy(V, z)) - pt.delta(z))
                     / max(1.0, abs(pt.delta(z))) for z in zs), 1e-12))
    ks = rng.uniform(-math.pi / p, math.pi / p, 8)
    worst = 0.0
    for z, k in zip(zs, ks):
        H = bloch.bloch_hamiltonian(V, k)
        lhs = np.linalg.det(z * np.eye(p) - H)
        rhs = pt.delta(z) - 2 * math.cos(p * k)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    rows.append((f"{tag}:bloch_determinant", worst, 1e-9))

    worst = 0.0
    for k in np.linspace(-math.pi + 1e-3, -1e-3, 7 * p):
        E = mo_map.global_band_function(V, k)
        worst = max(worst, abs(mo_map.theta(pt, E) - k))
    rows.append((f"{tag}:theta_inverts_band_function", worst, 1e-6))

    field = bloch.band_path(V, max(512, 16 * p), pt)
    quad = propagator.BlochQuadrature(V, propagator.MIN_PANELS)
    worst = 0.0
    for m in range(1, p + 1):
        for q in range(1, p + 1):
            s = sum(quad.kernel(j, m, q, 0, 0.0) for j in range(1, p + 1))
            worst = max(worst, abs(s - (m == q)))
    rows.append((f"{tag}:kernel_orthonormality", worst, 1e-10))

    psi = propagator.WavePacket(-1, rng.normal(size=3) + 1j * rng.normal(size=3))
    t = 5.0
    lattice = evolve.linear_evolve(V, psi, [t], boundary="dirichlet")[0]
    ns = np.arange(-25, 26)
    got = propagator.propagator_entries(V, psi, ns, t)
    ref = np.array([lattice.value_at(int(n)) for n in ns])
    rows.append((f"{tag}:lemma_vs_dirichlet", float(np.max(np.abs(got - ref))), 1e-6))

    ring = evolve.linear_evolve(V, psi, [t], boundary="ring")[0]
    rows.append((f"{tag}:ring_vs_dirichlet",
                 max(abs(ring.value_at(int(n)) - lattice.value_at(int(n))) for n in ns), 1e-8))
    rows.append((f"{tag}:unitarity", abs(ring.l2 - psi.l2), 1e-10))

    dc = propagator.dispersive_constant(V, field)
    rows.append((f"{tag}:M_V_floor", max(0.0, 2 ** (1 / 6) - dc.M_V), 0.0))
    return rows


def run_selftest(V: potential.PeriodicPotential, seed: int = 0):
    rng = np.random.default_rng(seed)
    rows = _identity_rows(V, "config", rng)
    W = potential.PeriodicPotential(np.round(rng.uniform(-2, 2, 3), 6))
    rows += _identity_rows(W, "random3", rng)
    free = bloch.delta_V(potential.PeriodicPotential([0.0]))
    rows.append(("free:delta_equals_two", abs(free - 2.0), 1e-9))
    rows.append(("vdc:constants", abs(propagator.van_der_corput_constant(2) - 8)
                 + abs(propagator.van_der_corput_constant(3) - 18), 0.0))
    return [(name, float(v), tol, bool(v <= tol)) for name, v, tol in rows]
