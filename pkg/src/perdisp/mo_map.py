"""The Marchenko-Ostrovski map Theta with Delta(z) = 2 cos(p Theta(z)).

Theta' is evaluated from the product formula

    Theta'(z) = i * prod_j (z - kappa_j) / prod_i sqrt(z - lambda_i)

with principal square roots, which is continuous on the upper half plane and
has argument pi/2 on the ray z > lambda_2p.  Real arguments are read as
boundary values from above.  Closed gaps contribute a factor of one and are
dropped.  Additive constants are fixed by Theta(lambda_1) = -pi and by
Theta increasing by exactly pi/p across each band, so that Theta(E(k)) = k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bloch import band_energies
from .errors import BranchPointEvaluation, NoSignChange, NumericalFailure, QuadratureFailure
from .potential import PeriodicPotential, SpectralPortrait, bisect_root, monodromy, spectral_portrait

BRANCH_TOL = 1e-12


def _portrait(V) -> SpectralPortrait:
    return V if isinstance(V, SpectralPortrait) else spectral_portrait(V)


def active_factors(portrait: SpectralPortrait) -> tuple[np.ndarray, np.ndarray]:
    """Edges and critical points that survive closed-gap cancellation."""
    keep = np.ones(len(portrait.edges), dtype=bool)
    for j, is_open in enumerate(portrait.gap_open):
        if not is_open:
            keep[2 * j + 1] = keep[2 * j + 2] = False
    return portrait.edges[keep], portrait.critical[portrait.gap_open]


def _sqrt_above(w: np.ndarray) -> np.ndarray:
    """sqrt(w) continued from the upper half plane; real negatives give +i."""
    w = np.asarray(w, dtype=complex)
    out = np.sqrt(w)
    neg_real = (w.imag == 0) & (w.real < 0)
    return np.where(neg_real, 1j * np.sqrt(np.abs(w.real)), out)


def _theta_prime_raw(edges, kappas, z):
    z = np.asarray(z, dtype=complex)
    num = np.prod(z[..., None] - kappas, axis=-1) if len(kappas) else np.ones_like(z)
    den = np.prod(_sqrt_above(z[..., None] - edges), axis=-1)
    return 1j * num / den


def theta_prime(V, z):
    """Theta'(z) for z in the closed upper half plane, off the band edges."""
    portrait = _portrait(V)
    edges, kappas = active_factors(portrait)
    z = np.asarray(z, dtype=complex)
    dist = np.min(np.abs(z[..., None] - edges), axis=-1)
    if np.any(dist < BRANCH_TOL):
        raise BranchPointEvaluation("Theta' evaluated at a band edge")
    out = _theta_prime_raw(edges, kappas, z)
    return out[()] if out.ndim == 0 else out


def in_spectrum(portrait: SpectralPortrait, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo = portrait.edges[0::2]
    hi = portrait.edges[1::2]
    return np.any((x[..., None] >= lo) & (x[..., None] <= hi), axis=-1)


def theta_derivatives_on_band(V, x):
    """(Theta', Theta'', Theta''') at real x inside the spectrum.

    Theta'' and Theta''' come from the logarithmic derivative of the product
    formula, so they are sums of exact rational terms.
    """
    portrait = _portrait(V)
    edges, kappas = active_factors(portrait)
    x = np.asarray(x, dtype=float)
    if np.any(np.min(np.abs(x[..., None] - edges), axis=-1) < BRANCH_TOL):
        raise BranchPointEvaluation("Theta derivatives evaluated at a band edge")
    if not np.all(in_spectrum(portrait, x)):
        raise ValueError("theta_derivatives_on_band needs x inside the spectrum")
    t1 = _theta_prime_raw(edges, kappas, x).real
    dk = x[..., None] - kappas
    de = x[..., None] - edges
    l1 = np.sum(1.0 / dk, axis=-1) - 0.5 * np.sum(1.0 / de, axis=-1)
    l2 = -np.sum(1.0 / dk ** 2, axis=-1) + 0.5 * np.sum(1.0 / de ** 2, axis=-1)
    t2 = t1 * l1
    t3 = t1 * (l2 + l1 ** 2)
    if x.ndim == 0:
        return float(t1), float(t2), float(t3)
    return t1, t2, t3


def band_of(portrait: SpectralPortrait, x: float) -> int:
    """1-based index of the band containing x (lowest index on a shared edge)."""
    for j, (lo, hi) in enumerate(portrait.bands, start=1):
        if lo <= x <= hi:
            return j
    raise ValueError(f"{x!r} is not in the spectrum")


def _edge_integral(edges, kappas, a: float, x: float) -> float:
    """int_a^x Theta'(s) ds with s = a +- u^2 to absorb the edge singularity."""
    sgn = 1.0 if x >= a else -1.0
    top = math.sqrt(abs(x - a))
    if top == 0.0:
        return 0.0
    hit = np.flatnonzero(edges == a)
    if hit.size:
        # sqrt(s - a) = u (or i u below a) cancels the Jacobian 2u exactly
        rest = np.delete(edges, hit[0])
        root = 1.0 if sgn > 0 else 1j

        def f(u):
            s = a + sgn * u * u
            num = np.prod(s - kappas) if len(kappas) else 1.0
            return (2j * num / (root * np.prod(_sqrt_above(s - rest)))).real
    else:
        def f(u):
            return _theta_prime_raw(edges, kappas, a + sgn * u * u).real * 2 * u

    val, _ = integrate.quad(f, 0.0, top, epsabs=1e-13, epsrel=1e-12, limit=200)
    return sgn * val


def theta(V, x: float, check: bool = True) -> float:
    """Theta(x) in [-pi, 0] for real x in the spectrum."""
    portrait = _portrait(V)
    p = portrait.period
    edges, kappas = active_factors(portrait)
    x = float(x)
    j = band_of(portrait, x)
    a, b = portrait.bands[j - 1]
    if x - a <= b - x:
        val = -math.pi + (j - 1) * math.pi / p + _edge_integral(edges, kappas, a, x)
    else:
        val = -math.pi + j * math.pi / p + _edge_integral(edges, kappas, b, x)
    if check:
        resid = abs(2 * math.cos(p * val) - portrait.delta(x))
        if resid > 1e-6:
            raise QuadratureFailure(f"2cos(p Theta) - Delta = {resid:.2e} at x={x!r}")
    return val


def theta_complex(V, z: complex) -> complex:
    """Theta continued into the upper half plane along a straight path.

    The path starts at the centre of the band nearest Re z, where Theta is
    real and known, and integrates Theta' to z.
    """
    portrait = _portrait(V)
    edges, kappas = active_factors(portrait)
    z = complex(z)
    if z.imag < 0:
        raise ValueError("theta_complex is defined for Im z >= 0")
    centres = np.array([(lo + hi) / 2 for lo, hi in portrait.bands])
    x0 = float(centres[np.argmin(np.abs(centres - z.real))])
    d = z - x0

    def part(s, which):
        w = _theta_prime_raw(edges, kappas, x0 + s * d) * d
        return w.real if which == 0 else w.imag

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
    re = integrate.quad(part, 0.0, 1.0, args=(0,), **opts)[0]
    im = integrate.quad(part, 0.0, 1.0, args=(1,), **opts)[0]
    return theta(portrait, x0) + complex(re, im)


def inflection_points(V) -> np.ndarray:
    """The unique zero of Theta'' in each connected component of the spectrum."""
    portrait = _portrait(V)
    out = []
    for lo, hi, _ in portrait.components():
        eps = 1e-9 * (hi - lo)

        def t2(x):
            return theta_derivatives_on_band(portrait, x)[1]

        a, b = lo + eps, hi - eps
        if not (t2(a) < 0 < t2(b)):
            raise NoSignChange(f"Theta'' has no sign change on [{lo:.6g}, {hi:.6g}]")
        xs = bisect_root(t2, a, b)
        if not theta_derivatives_on_band(portrait, xs)[2] > 0:
            raise NumericalFailure(f"Theta''' not positive at inflection point {xs!r}")
        out.append(xs)
    return np.array(out)


def global_band_function(V: PeriodicPotential, k):
    """E(k) on [-pi, 0], built from the band functions so that Theta(E(k)) = k."""
    p = V.period
    k = np.asarray(k, dtype=float)
    if np.any((k < -math.pi - 1e-15) | (k > 1e-15)):
        raise ValueError("global_band_function is defined on [-pi, 0]")
    j = np.clip(np.floor((k + math.pi) * p / math.pi).astype(int) + 1, 1, p)
    odd = (p - j) % 2 == 1
    arg = np.where(odd, k + math.pi - (j - 1) * math.pi / p, j * math.pi / p - k - math.pi)
    E = band_energies(V, arg)
    out = np.take_along_axis(np.atleast_2d(E), np.atleast_1d(j - 1)[:, None], axis=-1)[:, 0]
    return float(out[0]) if k.ndim == 0 else out


def lyapunov(V: PeriodicPotential, z) -> float:
    """(1/p) log of the spectral radius of the monodromy matrix."""
    ev = np.linalg.eigvals(monodromy(V, z))
    return max(0.0, float(np.log(np.max(np.abs(ev)))) / V.period)


@dataclass
class MOBoundaryData:
    """Boundary samples of Theta and its derivatives, band by band."""
    portrait: SpectralPortrait = field(repr=False)
    band: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    theta1: np.ndarray = field(repr=False)
    theta2: np.ndarray = field(repr=False)
    theta3: np.ndarray = field(repr=False)
    inflection: np.ndarray = field(repr=False)


def mo_boundary_data(V, n_per_band: int = 64) -> MOBoundaryData:
    portrait = _portrait(V)
    bands, xs = [], []
    for j, (lo, hi) in enumerate(portrait.bands, start=1):
        # Chebyshev-like spacing keeps samples off the edges
        u = (np.arange(n_per_band) + 0.5) / n_per_band
        x = lo + (hi - lo) * 0.5 * (1 - np.cos(math.pi * u))
        bands.append(np.full(n_per_band, j))
        xs.append(x)
    band = np.concatenate(bands)
    x = np.concatenate(xs)
    th = np.array([theta(portrait, xi) for xi in x])
    t1, t2, t3 = theta_derivatives_on_band(portrait, x)
    return MOBoundaryData(portrait, band, x, th, t1, t2, t3, inflection_points(portrait))
