"""Oscillatory-integral representation of e^{-itH} and the dispersive constant.

The propagator matrix element is

    <e^{-itH} psi, delta_n> = sum_{q, r} psi_{q + rp} sum_j K_j(m, q, r - l, t),
    K_j(m, q, d, t) = (1/|B|) int_B e^{-i(t E_j(k) + p d k)} [v_j]_m conj([v_j]_q) dk,

with n = m + l p, 1 <= m <= p.  The integrals are evaluated by composite
Gauss-Legendre quadrature resolved to the oscillation frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bloch import BandField, band_decomposition, band_derivatives, band_path, delta_V, eigvec_sobolev_norm
from .errors import QuadratureFailure
from .potential import PeriodicPotential, bisect_root

GL_ORDER = 10
MIN_PANELS = 64


# ---------------------------------------------------------------------------
# wave packets


@dataclass(frozen=True)
class WavePacket:
    """Finitely supported lattice function; amplitudes[i] lives on site offset + i."""
    offset: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex).ravel())

    @classmethod
    def delta(cls, site: int = 0, amplitude: complex = 1.0) -> "WavePacket":
        return cls(site, np.array([amplitude], dtype=complex))

    @property
    def sites(self) -> np.ndarray:
        return self.offset + np.arange(len(self.amplitudes))

    @property
    def first(self) -> int:
        return self.offset

    @property
    def last(self) -> int:
        return self.offset + len(self.amplitudes) - 1

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    @property
    def l2(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.amplitudes), initial=0.0))

    def value_at(self, n: int) -> complex:
        i = n - self.offset
        return complex(self.amplitudes[i]) if 0 <= i < len(self.amplitudes) else 0j

    def trimmed(self, tol: float = 0.0) -> "WavePacket":
        nz = np.flatnonzero(np.abs(self.amplitudes) > tol)
        if nz.size == 0:
            return WavePacket(self.offset, np.zeros(1, dtype=complex))
        return WavePacket(self.offset + int(nz[0]), self.amplitudes[nz[0]:nz[-1] + 1])

    def __mul__(self, c):
        return WavePacket(self.offset, self.amplitudes * c)

    __rmul__ = __mul__


def split_site(n, p: int):
    """n = m + l p with 1 <= m <= p; returns (m, l)."""
    n = np.asarray(n)
    m = (n - 1) % p + 1
    return m, (n - m) // p


# ---------------------------------------------------------------------------
# stationary-set partition


@dataclass
class StationaryPartition:
    """Per band, the intervals of B = [-pi/p, pi/p) labelled K2 or K3.

    K2 is where |E_j''| >= delta/2 and K3 is the rest.  ``intervals[j-1]`` is a
    list of (k_left, k_right, label) covering B in order.
    """
    delta: float
    period: int
    intervals: list[list[tuple[float, float, str]]]

    def components(self, j: int, label: str) -> list[tuple[float, float]]:
        return [(a, b) for a, b, lab in self.intervals[j - 1] if lab == label]

    def count(self, j: int, label: str) -> int:
        return len(self.components(j, label))

    def left_endpoints(self, j: int) -> list[float]:
        return [a for a, _, _ in self.intervals[j - 1]]

    @property
    def counts(self) -> list[dict[str, int]]:
        return [{"K2": self.count(j, "K2"), "K3": self.count(j, "K3")}
                for j in range(1, self.period + 1)]


def stationary_partition(V: PeriodicPotential, field: BandField, delta: float) -> StationaryPartition:
    p = V.period
    half = math.pi / p
    thr = delta / 2
    out = []
    for j in range(1, p + 1):
        f = np.abs(field.e2[:, j - 1]) - thr

        def g(k, j=j):
            return abs(band_derivatives(V, j, k, field.portrait)[1]) - thr

        inside = f >= 0
        cuts = []
        for i in np.flatnonzero(inside[1:] != inside[:-1]):
            cuts.append(bisect_root(g, float(field.grid[i]), float(field.grid[i + 1])))
        bounds = [0.0] + cuts + [half]
        labels = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            mid = 0.5 * (a + b)
            labels.append("K2" if g(mid) >= 0 else "K3")
        # mirror to [-pi/p, 0]; the pieces meeting at 0 share a label
        neg = [(-b, -a, lab) for a, b, lab in zip(bounds[:-1], bounds[1:], labels)][::-1]
        pos = list(zip(bounds[:-1], bounds[1:], labels))
        a0, _, lab0 = neg[-1]
        _, b0, _ = pos[0]
        merged = neg[:-1] + [(a0, b0, lab0)] + pos[1:]
        out.append(merged)
    return StationaryPartition(delta, p, out)


# ---------------------------------------------------------------------------
# van der Corput


def van_der_corput_constant(k: int) -> int:
    if k < 2:
        raise ValueError("van der Corput constant needs derivative order >= 2")
    return 5 * 2 ** (k - 1) - 2


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def composite_nodes(a: float, b: float, panels: int, order: int = GL_ORDER):
    """Nodes and weights of composite Gauss-Legendre on [a, b]."""
    x, w = _gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def oscillatory_integral(f, a: float, b: float, panels: int = 16, rtol: float = 1e-10,
                         atol: float = 1e-13, max_panels: int = 2 ** 22) -> complex:
    """Integrate a (vectorised, complex) f over [a, b] by panel doubling."""
    prev = None
    while panels <= max_panels:
        x, w = composite_nodes(a, b, panels)
        val = complex(np.sum(w * f(x)))
        if prev is not None and abs(val - prev) <= max(atol, rtol * abs(val)):
            return val
        prev = val
        panels *= 2
    raise QuadratureFailure(f"oscillatory integral on [{a}, {b}] did not converge")


def total_variation(psi, a: float, b: float, n: int = 20001) -> float:
    """int_a^b |psi'| for a sampled complex amplitude."""
    x = np.linspace(a, b, n)
    return float(np.sum(np.abs(np.diff(psi(x)))))


@dataclass(frozen=True)
class VdcCheck:
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs


def vdc_bound_check(phi, order: int, delta: float, psi, eta, lam: float, a: float, b: float,
                    panels: int | None = None, variation=None) -> VdcCheck:
    """Compare |int_a^b e^{i(lam phi + eta)} psi| with its van der Corput bound.

    ``phi``, ``psi``, ``eta`` are vectorised callables; ``eta`` must be affine.
    ``variation`` overrides the numerical int |psi'|.
    """
    if panels is None:
        # rough frequency estimate from a sample of the phase
        xs = np.linspace(a, b, 257)
        slope = np.max(np.abs(np.gradient(lam * phi(xs) + eta(xs), xs)))
        panels = max(16, int(math.ceil(8 * slope * (b - a) / (2 * math.pi) / GL_ORDER)) + 1)
    lhs = abs(oscillatory_integral(lambda x: np.exp(1j * (lam * phi(x) + eta(x))) * psi(x),
                                   a, b, panels=panels))
    var = total_variation(psi, a, b) if variation is None else variation
    C = van_der_corput_constant(order)
    rhs = C * delta ** (-1.0 / order) * (abs(psi(np.array([a]))[0]) + var) * abs(lam) ** (-1.0 / order)
    return VdcCheck(float(lhs), float(rhs))


def band_phase_checks(V: PeriodicPotential, field: BandField, partition: StationaryPartition,
                      lam: float, m: int = 1, q: int = 1, d: int = 0) -> list[tuple[int, str, VdcCheck]]:
    """The van der Corput check on every K2 (order 2) and K3 (order 3) piece.

    Phase is -E_j, the linear part -p d k, the amplitude [v_j]_m conj([v_j]_q),
    all evaluated exactly at the quadrature nodes.
    """
    p = V.period
    out = []
    for j in range(1, p + 1):
        for a, b, lab in partition.intervals[j - 1]:
            order = 2 if lab == "K2" else 3

            def phi(x, j=j):
                return -band_decomposition(V, x)[0][..., j - 1]

            def amp(x, j=j):
                _, U = band_decomposition(V, x)
                return U[..., m - 1, j - 1] * np.conj(U[..., q - 1, j - 1])

            def eta(x):
                return -p * d * np.asarray(x)

            res = vdc_bound_check(phi, order, partition.delta / 2, amp, eta, lam, a, b)
            out.append((j, lab, res))
    return out


# ---------------------------------------------------------------------------
# Lemma-type representation


def panel_count(t: float, d: int, p: int, vmax: float) -> int:
    n = max(MIN_PANELS, math.ceil(8 * (abs(t) * vmax + p * abs(d)) / (2 * math.pi)))
    return n + (n % 2)


class BlochQuadrature:
    """Eigendecompositions of H(k) at composite Gauss nodes on B."""

    def __init__(self, V: PeriodicPotential, panels: int):
        p = V.period
        self.V = V
        self.panels = panels
        self.k, self.w = composite_nodes(-math.pi / p, math.pi / p, panels)
        self.E, self.U = band_decomposition(V, self.k)
        self.measure = 2 * math.pi / p

    def kernel(self, j: int, m: int, q: int, d: int, t: float) -> complex:
        p = self.V.period
        amp = self.U[:, m - 1, j - 1] * np.conj(self.U[:, q - 1, j - 1])
        ph = np.exp(-1j * (t * self.E[:, j - 1] + p * d * self.k))
        return complex(np.sum(self.w * ph * amp) / self.measure)


@lru_cache(maxsize=64)
def _quadrature(V: PeriodicPotential, panels: int) -> BlochQuadrature:
    return BlochQuadrature(V, panels)


@lru_cache(maxsize=64)
def max_velocity(V: PeriodicPotential) -> float:
    """max_{j,k} |E_j'(k)|, sampled on a fine grid."""
    return band_path(V, max(1024, 16 * V.period)).max_velocity


def kernel_integral(V: PeriodicPotential, j: int, m: int, q: int, d: int, t: float,
                    panels: int | None = None) -> complex:
    """Single-band kernel K_j(m, q, d, t) over B with measure dk/|B|."""
    if panels is None:
        panels = panel_count(t, d, V.period, max_velocity(V))
    return _quadrature(V, panels).kernel(j, m, q, d, t)


def propagator_entry(V: PeriodicPotential, psi: WavePacket, n: int, t: float,
                     panels: int | None = None) -> complex:
    """<e^{-itH} psi, delta_n> as the finite band/site sum of kernel integrals."""
    p = V.period
    m, ell = split_site(n, p)
    qs, rs = split_site(psi.sites, p)
    dmax = int(np.max(np.abs(rs - ell)))
    if panels is None:
        panels = panel_count(t, dmax, p, max_velocity(V))
    quad = _quadrature(V, panels)
    total = 0j
    for a, q, r in zip(psi.amplitudes, qs, rs):
        if a == 0:
            continue
        total += a * sum(quad.kernel(j, int(m), int(q), int(r - ell), t) for j in range(1, p + 1))
    return total


def propagator_entries(V: PeriodicPotential, psi: WavePacket, ns, t: float,
                       panels: int | None = None) -> np.ndarray:
    """Vectorised propagator_entry over target sites ns.

    Same quadrature, with the sums over sources and bands moved inside the
    k-integral: the integrand becomes [e^{-itH(k)} psi_hat(k)]_m e^{i l p k}.
    """
    p = V.period
    ns = np.asarray(ns)
    m, ell = split_site(ns, p)
    qs, rs = split_site(psi.sites, p)
    dmax = int(max(np.max(np.abs(rs)) + np.max(np.abs(ell)), 0))
    if panels is None:
        panels = panel_count(t, dmax, p, max_velocity(V))
    quad = _quadrature(V, panels)
    k = quad.k
    psi_hat = np.zeros((len(k), p), dtype=complex)
    for a, q, r in zip(psi.amplitudes, qs, rs):
        psi_hat[:, q - 1] += a * np.exp(-1j * p * r * k)
    U = quad.U
    coeff = np.einsum("kqj,kq->kj", U.conj(), psi_hat) * np.exp(-1j * t * quad.E)
    phi = np.einsum("kmj,kj->km", U, coeff)
    # conjugate-free quadrature over k for every target
    basis = np.exp(1j * p * np.outer(ell, k))
    vals = np.einsum("nk,nk->n", basis * quad.w, phi[:, m - 1].T)
    return vals / quad.measure


# ---------------------------------------------------------------------------
# dispersive constant


@dataclass
class DispersiveConstants:
    delta: float
    delta_used: float
    C_Vj: np.ndarray
    C_Vj_sum: float
    C_V: float
    M_V: float
    counts: list[dict[str, int]]
    sobolev: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def sobolev_max(self) -> float:
        return float(np.max(self.sobolev))

    def bound(self, t) -> np.ndarray:
        """M_V <t>^{-1/3}."""
        return self.M_V * (1 + np.asarray(t, dtype=float) ** 2) ** (-1 / 6)


def _projector_entries(U_col: np.ndarray) -> np.ndarray:
    """|p x p| matrix of [v]_m conj([v]_q) for each grid point; shape (N, p, p)."""
    return U_col[:, :, None] * np.conj(U_col[:, None, :])


def _endpoint_projector(V: PeriodicPotential, field: BandField, j: int, k: float) -> np.ndarray:
    kk = abs(k)
    half = math.pi / V.period
    E, U = band_decomposition(V, kk)
    gaps = np.diff(E)
    tol = 1e-7 * (1 + field.portrait.diameter)
    degenerate = (j > 1 and gaps[j - 2] <= tol) or (j < V.period and gaps[j - 1] <= tol)
    if degenerate:
        # take the one-sided limit carried by the continued field
        i = 0 if kk < half / 2 else field.n_k - 1
        v = field.vectors[i, :, j - 1]
    else:
        v = U[:, j - 1]
    P = np.outer(v, np.conj(v))
    return P if k >= 0 else np.conj(P)


def dispersive_constant(V: PeriodicPotential, field: BandField | None = None,
                        delta: float | None = None,
                        partition: StationaryPartition | None = None) -> DispersiveConstants:
    """delta, C_{V,j}, C_V and M_V for the potential."""
    p = V.period
    field = band_path(V) if field is None else field
    delta = delta_V(V, field) if delta is None else delta
    partition = stationary_partition(V, field, delta) if partition is None else partition
    sob = np.array([eigvec_sobolev_norm(V, j, field) for j in range(1, p + 1)])

    C_j = np.zeros((p, p, p))
    for j in range(1, p + 1):
        P = _projector_entries(field.vectors[:, :, j - 1])
        dP = np.gradient(P, field.grid, axis=0, edge_order=2)
        var = 2 * np.trapezoid(np.abs(dP), field.grid, axis=0)
        ends = sum(np.abs(_endpoint_projector(V, field, j, k)) for k in partition.left_endpoints(j))
        C_j[j - 1] = ends + var
    counts = partition.counts
    n_pieces = max(c["K2"] + c["K3"] for c in counts)
    C_V = n_pieces * (1 + p * float(np.max(sob)) + 2 * math.pi / p)
    delta_used = min(delta, 1.0)
    C3 = van_der_corput_constant(3)
    M = max(p * C3 / (2 ** (1 / 3) * math.pi) * C_V * delta_used ** -0.5, 2 ** (1 / 6))
    return DispersiveConstants(
        delta=float(delta),
        delta_used=float(delta_used),
        C_Vj=C_j.reshape(p, -1).max(axis=1),
        C_Vj_sum=float(C_j.sum(axis=0).max()),
        C_V=float(C_V),
        M_V=float(M),
        counts=counts,
        sobolev=sob,
        warnings=list(field.warnings),
    )


def interpolated_bound(M_V: float, p_exp: float, t: float) -> float:
    """(M_V <t>^{-1/3})^{2/p - 1}: the l^p -> l^p' bound for 1 < p < 2."""
    if not 1 < p_exp < 2:
        raise ValueError("interpolation exponent must lie in (1, 2)")
    return float((M_V * (1 + t * t) ** (-1 / 6)) ** (2 / p_exp - 1))
