"""Bloch matrices H(k), band functions and their derivatives.

Band functions are labelled by energy order, E_1(k) <= ... <= E_p(k), and are
sampled on [0, pi/p]; evenness E_j(-k) = E_j(k) supplies the rest of the
Brillouin zone B = [-pi/p, pi/p).

Derivatives come from differentiating Delta(E_j(k)) = 2 cos(pk) implicitly.
Near an energy where a gap has closed those formulas are 0/0, so inside a
guard radius the derivatives are taken by Richardson-extrapolated finite
differences of the band function instead.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContinuationWarning, DegenerateDerivative, EigenFailure, NonPositiveDelta
from .potential import PeriodicPotential, SpectralPortrait, spectral_portrait

#: energy guard radius (relative to 1 + spectral diameter) around closed gaps
DEFAULT_GUARD = 1e-3
DEFAULT_NK = 1024


def bloch_hamiltonian(V: PeriodicPotential, k) -> np.ndarray:
    """H(k) for scalar k (shape (p, p)) or an array of k (shape (..., p, p))."""
    k = np.asarray(k, dtype=float)
    p = V.period
    H = np.zeros(k.shape + (p, p), dtype=complex)
    idx = np.arange(p)
    H[..., idx, idx] = V.array
    ph = np.exp(1j * p * k)
    if p == 1:
        H[..., 0, 0] += 2 * np.cos(p * k)
    elif p == 2:
        H[..., 0, 1] = 1 + np.conj(ph)
        H[..., 1, 0] = 1 + ph
    else:
        H[..., idx[:-1], idx[1:]] = 1.0
        H[..., idx[1:], idx[:-1]] = 1.0
        H[..., 0, p - 1] = np.conj(ph)
        H[..., p - 1, 0] = ph
    return H


def band_energies(V: PeriodicPotential, k) -> np.ndarray:
    """Sorted eigenvalues of H(k); shape (..., p)."""
    return np.linalg.eigvalsh(bloch_hamiltonian(V, k))


def band_decomposition(V: PeriodicPotential, k, check: float = 1e-8):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of H(k)."""
    H = bloch_hamiltonian(V, k)
    E, U = np.linalg.eigh(H)
    resid = np.max(np.abs(H @ U - U * E[..., None, :]))
    if not resid <= check:
        raise EigenFailure(f"eigen-residual {resid:.3e} exceeds {check:.1e}")
    return E, U


# ---------------------------------------------------------------------------
# derivatives


def _fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Weights w with sum w_i f(x + c_i h) ~ h^order f^(order)(x)."""
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


_CENTRAL = np.arange(-4, 5, dtype=float)
_ONESIDED = np.arange(0, 9, dtype=float)


def _degenerate_ends(portrait: SpectralPortrait, j: int) -> list[float]:
    """k in {0, pi/p} where band j touches a neighbour through a closed gap."""
    p = portrait.period
    increasing = (p - j) % 2 == 1
    top_k, bottom_k = (math.pi / p, 0.0) if increasing else (0.0, math.pi / p)
    ends = []
    if j < p and not portrait.gap_open[j - 1]:
        ends.append(top_k)
    if j > 1 and not portrait.gap_open[j - 2]:
        ends.append(bottom_k)
    return ends


def fd_band_derivatives(V: PeriodicPotential, j: int, k: float,
                        portrait: SpectralPortrait | None = None, h: float | None = None,
                        levels: int = 7):
    """(E', E'', E''') of E_j at k by Richardson-extrapolated finite differences.

    Steps h, h/2, ..., h/2^levels are tried; for each derivative order the
    extrapolated pair that disagrees least is kept.  Stencils never straddle
    a degenerate end of the band, where the energy-ordered band function has
    a kink.
    """
    portrait = spectral_portrait(V) if portrait is None else portrait
    p = V.period
    h = 0.2 / p if h is None else h
    offsets = _CENTRAL
    span = h * _CENTRAL[-1]
    for kd in _degenerate_ends(portrait, j):
        if abs(k - kd) < span:
            # lean away from the kink into the band's own interval
            offsets = _ONESIDED if kd == 0.0 else -_ONESIDED
            break
    weights = np.array([_fd_weights(offsets, d) for d in (1, 2, 3)])
    acc = np.array([len(offsets) - d for d in (1, 2, 3)], dtype=float)
    if offsets is _CENTRAL:
        # symmetric stencils gain one order for odd/even cancellation
        acc = acc + (acc % 2)

    steps = h / 2.0 ** np.arange(levels + 1)
    E = band_energies(V, k + np.outer(steps, offsets))[..., j - 1]
    raw = (E @ weights.T) / steps[:, None] ** np.arange(1, 4)
    rich = (2 ** acc * raw[1:] - raw[:-1]) / (2 ** acc - 1)
    gaps = np.abs(np.diff(rich, axis=0))
    # a pair only counts as converged if its neighbour agrees too
    score = np.maximum(gaps[:-1], gaps[1:])
    best = np.argmin(score, axis=0)
    return tuple(float(rich[b + 1, d]) for d, b in enumerate(best))


def implicit_derivatives(portrait: SpectralPortrait, E, k):
    """E', E'', E''' from Delta(E(k)) = 2cos(pk); vectorised, no guard."""
    p = portrait.period
    d1, d2, d3 = portrait.delta_derivs
    E = np.asarray(E, dtype=float)
    k = np.asarray(k, dtype=float)
    D1, D2, D3 = d1(E), d2(E), d3(E)
    s, c = np.sin(p * k), np.cos(p * k)
    with np.errstate(divide="ignore", invalid="ignore"):
        e1 = -2 * p * s / D1
        e2 = (-2 * p ** 2 * c - D2 * e1 ** 2) / D1
        e3 = (2 * p ** 3 * s - D3 * e1 ** 3 - 3 * D2 * e1 * e2) / D1
    return e1, e2, e3


def band_derivatives(V: PeriodicPotential, j: int, k, portrait: SpectralPortrait | None = None,
                     E=None, guard: float = DEFAULT_GUARD):
    """(E'_j, E''_j, E'''_j) at k (scalar or array).

    At the band-edge quasimomenta k = 0, pi/p the implicit formula reduces to
    E'' = -+2p^2 / Delta'(E), which is what is returned there.  Inside the
    guard radius of a closed gap the finite-difference route is used, and the
    two routes' first derivatives are required to agree.
    """
    portrait = spectral_portrait(V) if portrait is None else portrait
    p = V.period
    scalar = np.ndim(k) == 0
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if E is None:
        E = band_energies(V, k)[:, j - 1]
    E = np.atleast_1d(np.asarray(E, dtype=float))
    e1, e2, e3 = implicit_derivatives(portrait, E, k)
    # sin(pk) vanishes at the symmetric points; its float value does not
    at_edge = np.abs(np.sin(p * k)) < 1e-14
    D1 = portrait.delta_derivs[0](E)
    with np.errstate(divide="ignore", invalid="ignore"):
        edge_e2 = -2 * p ** 2 * np.cos(p * k) / D1
    e1 = np.where(at_edge, 0.0, e1)
    e2 = np.where(at_edge, edge_e2, e2)
    e3 = np.where(at_edge, 0.0, e3)

    closed = portrait.closed_gap_energies()
    if closed.size:
        radius = guard * (1 + portrait.diameter)
        near = np.min(np.abs(E[:, None] - closed[None, :]), axis=1) < radius
        for i in np.flatnonzero(near):
            f1, f2, f3 = fd_band_derivatives(V, j, float(k[i]), portrait)
            if np.isfinite(e1[i]) and abs(E[i] - closed).min() > 1e-6 * radius:
                if abs(f1 - e1[i]) > 1e-4 * max(1.0, abs(f1)):
                    raise DegenerateDerivative(
                        f"band {j} at k={k[i]:.6g}: implicit E'={e1[i]:.6g} vs FD {f1:.6g}")
            e1[i], e2[i], e3[i] = f1, f2, f3
    if scalar:
        return float(e1[0]), float(e2[0]), float(e3[0])
    return e1, e2, e3


# ---------------------------------------------------------------------------
# band field


@dataclass
class BandField:
    """Band data on the grid 0 = k_0 < ... < k_{N-1} = pi/p.

    ``energies`` has shape (N, p); ``vectors[i, :, j]`` is v_{j+1}(k_i) so
    that ``vectors[i]`` is the unitary eigenvector matrix at k_i;
    ``e1``, ``e2``, ``e3`` have shape (N, p).
    """
    potential: PeriodicPotential
    portrait: SpectralPortrait = field(repr=False)
    grid: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)
    e3: np.ndarray = field(repr=False)
    min_overlap: float = 1.0
    warnings: list[str] = field(default_factory=list)

    @property
    def period(self) -> int:
        return self.potential.period

    @property
    def n_k(self) -> int:
        return len(self.grid)

    @property
    def reliable(self) -> bool:
        return not self.warnings

    @property
    def max_velocity(self) -> float:
        return float(np.max(np.abs(self.e1)))


def _align_cluster(U: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Rotate the columns of U within their span to best match ref."""
    u, _, vh = np.linalg.svd(U.conj().T @ ref)
    return U @ (u @ vh)


def _clusters(E: np.ndarray, tol: float) -> list[list[int]]:
    groups, cur = [], [0]
    for i in range(1, len(E)):
        if E[i] - E[i - 1] <= tol:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return [g for g in groups if len(g) > 1]


def _fix_first_phase(U: np.ndarray) -> np.ndarray:
    imax = np.argmax(np.abs(U), axis=0)
    lead = U[imax, np.arange(U.shape[1])]
    return U * (np.abs(lead) / lead)


def band_path(V: PeriodicPotential, n_k: int = DEFAULT_NK,
              portrait: SpectralPortrait | None = None) -> BandField:
    p = V.period
    if n_k < 16 * p:
        raise ValueError(f"n_k={n_k} below the minimum 16p={16 * p}")
    portrait = spectral_portrait(V) if portrait is None else portrait
    grid = np.linspace(0.0, math.pi / p, n_k)
    E, U = band_decomposition(V, grid)
    U = U.copy()
    tol = 1e-7 * (1 + portrait.diameter)

    # the first frame: a degenerate cluster is aligned to the linear
    # extrapolation of its two neighbours, which picks the one-sided limit
    first = _fix_first_phase(U[0])
    clusters0 = _clusters(E[0], tol)
    if clusters0:
        u1 = _fix_first_phase(U[1])
        ov = np.einsum("aj,aj->j", u1.conj(), U[2])
        u2 = U[2] * np.conj(ov) / np.abs(ov)
        for g in clusters0:
            first[:, g] = _align_cluster(U[0][:, g], (2 * u1 - u2)[:, g])
    U[0] = _fix_first_phase(first)

    min_ov = 1.0
    for i in range(1, n_k):
        cur = U[i]
        for g in _clusters(E[i], tol):
            ref = 2 * U[i - 1] - U[i - 2] if i >= 2 else U[i - 1]
            cur[:, g] = _align_cluster(cur[:, g], ref[:, g])
        ov = np.einsum("aj,aj->j", U[i - 1].conj(), cur)
        mag = np.abs(ov)
        cur *= np.where(mag > 0, np.conj(ov) / np.where(mag > 0, mag, 1), 1.0)
        U[i] = cur
        min_ov = min(min_ov, float(mag.min()))

    notes = []
    if min_ov < 0.9:
        msg = f"eigenvector overlap fell to {min_ov:.3f}; k-grid of {n_k} is too coarse"
        warnings.warn(msg, ContinuationWarning, stacklevel=2)
        notes.append(msg)

    e1 = np.empty_like(E)
    e2 = np.empty_like(E)
    e3 = np.empty_like(E)
    for j in range(1, p + 1):
        e1[:, j - 1], e2[:, j - 1], e3[:, j - 1] = band_derivatives(
            V, j, grid, portrait, E=E[:, j - 1])
    return BandField(V, portrait, grid, E, U, e1, e2, e3, min_ov, notes)


# ---------------------------------------------------------------------------
# non-degeneracy constant and eigenvector regularity


def _golden_min(f, a: float, b: float, iters: int = 80) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def delta_V(V: PeriodicPotential, field: BandField | None = None, detail: bool = False):
    """min_j min_k (|E_j''| + |E_j'''|) over [0, pi/p], locally refined."""
    field = band_path(V) if field is None else field
    portrait = field.portrait
    vals = np.abs(field.e2) + np.abs(field.e3)
    best = (math.inf, None, None)
    for j in range(1, V.period + 1):
        col = vals[:, j - 1]
        i = int(np.argmin(col))
        cand = (float(col[i]), j, float(field.grid[i]))
        lo = field.grid[max(i - 1, 0)]
        hi = field.grid[min(i + 1, field.n_k - 1)]

        def f(k, j=j):
            _, a, b = band_derivatives(V, j, k, portrait)
            return abs(a) + abs(b)

        kr, fr = _golden_min(f, float(lo), float(hi))
        if fr < cand[0]:
            cand = (fr, j, kr)
        if cand[0] < best[0]:
            best = cand
    value = best[0]
    if not value > 1e-12:
        raise NonPositiveDelta(f"delta(V) = {value:.3e} at band {best[1]}, k={best[2]}")
    if detail:
        return value, best[1], best[2]
    return value


def eigvec_derivative(field: BandField) -> np.ndarray:
    """dv_j/dk on the grid by central differences; same layout as vectors."""
    return np.gradient(field.vectors, field.grid, axis=0, edge_order=2)


def eigvec_sobolev_norm(V: PeriodicPotential, j: int, field: BandField | None = None) -> float:
    """Integral over B of ||v_j'(k)||^2 (twice the half-zone integral)."""
    field = band_path(V) if field is None else field
    dv = eigvec_derivative(field)[:, :, j - 1]
    dens = np.sum(np.abs(dv) ** 2, axis=1)
    return float(2 * np.trapezoid(dens, field.grid))
