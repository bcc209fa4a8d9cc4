"""Periodic potentials, the Floquet discriminant and its real-root geometry.

The operator is ``(H psi)(n) = psi(n-1) + psi(n+1) + V(n) psi(n)`` with a
``p``-periodic potential.  Sites are 1-based in the mathematical convention;
``PeriodicPotential.at(n)`` does the cyclic reduction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BisectionFailure, RootPolishFailure

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class PeriodicPotential:
    values: tuple[float, ...]

    def __init__(self, values):
        vals = tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))
        if len(vals) == 0:
            raise ValueError("potential must have period >= 1")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def period(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values)

    def at(self, n) -> np.ndarray | float:
        """V(n) for integer site(s) n, 1-based and cyclic."""
        idx = (np.asarray(n) - 1) % self.period
        out = self.array[idx]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.array)))

    def shifted(self, s: int) -> "PeriodicPotential":
        """The translate n -> V(n + s)."""
        return PeriodicPotential(np.roll(self.array, -s))

    def __hash__(self):
        return hash(self.values)


def _fsum_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact-as-possible linear convolution: each output coefficient is an fsum."""
    n = len(a) + len(b) - 1
    out = np.zeros(n)
    for k in range(n):
        lo, hi = max(0, k - len(b) + 1), min(k, len(a) - 1)
        out[k] = math.fsum(a[i] * b[k - i] for i in range(lo, hi + 1))
    return out


class RealPolynomial:
    """Real polynomial with coefficients in ascending degree."""

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        # strip trailing zeros but keep at least the constant term
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        self.coeffs = c

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        z = np.asarray(z)
        acc = np.zeros_like(z, dtype=np.result_type(z, float)) + self.coeffs[-1]
        for c in self.coeffs[-2::-1]:
            acc = acc * z + c
        return acc[()] if acc.ndim == 0 else acc

    def magnitude(self, x):
        """sum |c_i| |x|^i, the scale of rounding error in evaluating at x."""
        return RealPolynomial(np.abs(self.coeffs))(np.abs(x))

    def deriv(self, m: int = 1) -> "RealPolynomial":
        c = self.coeffs
        for _ in range(m):
            if len(c) == 1:
                return RealPolynomial([0.0])
            c = c[1:] * np.arange(1, len(c))
        return RealPolynomial(c)

    def __add__(self, other):
        other = other if isinstance(other, RealPolynomial) else RealPolynomial([other])
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.pad(self.coeffs, (0, n - len(self.coeffs)))
        b = np.pad(other.coeffs, (0, n - len(other.coeffs)))
        return RealPolynomial(a + b)

    __radd__ = __add__

    def __neg__(self):
        return RealPolynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, RealPolynomial) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, RealPolynomial):
            return RealPolynomial(self.coeffs * float(other))
        return RealPolynomial(_fsum_convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, RealPolynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self):
        return f"RealPolynomial({self.coeffs.tolist()})"


def transfer_matrix(V: PeriodicPotential, n: int, z) -> np.ndarray:
    """One-step transfer matrix [[z - V(n), -1], [1, 0]]."""
    return np.array([[z - V.at(n), -1.0], [1.0, 0.0]], dtype=complex)


def monodromy(V: PeriodicPotential, z) -> np.ndarray:
    """Ordered product A(p) ... A(1)."""
    M = np.eye(2, dtype=complex)
    for n in range(1, V.period + 1):
        M = transfer_matrix(V, n, z) @ M
    return M


def discriminant_poly(V: PeriodicPotential) -> RealPolynomial:
    """Exact coefficients of Delta(z) = tr(monodromy) by polynomial matrix products."""
    one, zero = RealPolynomial([1.0]), RealPolynomial([0.0])
    M = [[one, zero], [zero, one]]
    for n in range(1, V.period + 1):
        a = RealPolynomial([-V.at(n), 1.0])
        # [[a, -1], [1, 0]] @ M
        M = [
            [a * M[0][0] - M[1][0], a * M[0][1] - M[1][1]],
            [M[0][0], M[0][1]],
        ]
    return M[0][0] + M[1][1]


def polish_root(f, df, x0: float, bracket=None, rtol: float = 1e-12,
                maxiter: int = 100, noise=None) -> float:
    """Newton iteration with a bisection safeguard.

    ``bracket`` is used only when ``f`` changes sign on it.  ``noise(x)``
    returns the rounding-error scale of ``f`` at ``x``; a residual below it
    counts as converged (this is what lets double roots through).
    """
    x = float(x0)
    lo = hi = None
    if bracket is not None:
        a, b = bracket
        fa, fb = f(a), f(b)
        if fa == 0:
            return float(a)
        if fb == 0:
            return float(b)
        if np.sign(fa) != np.sign(fb):
            lo, hi, flo = float(a), float(b), fa
            if not lo <= x <= hi:
                x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0 or (noise is not None and abs(fx) <= noise(x)):
            return x
        if lo is not None:
            if np.sign(fx) == np.sign(flo):
                lo, flo = x, fx
            else:
                hi = x
        d = df(x)
        xn = x - fx / d if d != 0 else math.nan
        if lo is not None and not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        if not math.isfinite(xn):
            break
        if abs(xn - x) <= rtol * (1 + abs(x)):
            return xn
        if lo is not None and hi - lo <= rtol * (1 + abs(x)):
            return 0.5 * (lo + hi)
        x = xn
    raise RootPolishFailure(f"root refinement from {x0!r} did not converge in {maxiter} iterations")


def bisect_root(f, lo: float, hi: float, maxiter: int = 200) -> float:
    """Bisection to machine resolution; f(lo) and f(hi) must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BisectionFailure(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _edge_matrix(V: PeriodicPotential, k: float) -> np.ndarray:
    # local import keeps potential-core free of a hard dependency cycle
    from .bloch import bloch_hamiltonian
    return bloch_hamiltonian(V, k)


def gap_closed_threshold(edges: np.ndarray) -> float:
    return 1e-9 * (1.0 + (edges[-1] - edges[0]))


def band_edges(V: PeriodicPotential, delta: RealPolynomial | None = None) -> np.ndarray:
    """The 2p roots of Delta^2 - 4, sorted ascending.

    Seeds are the eigenvalues of H(0) (roots of Delta - 2) and H(pi/p)
    (roots of Delta + 2); each is then polished on its own polynomial.
    """
    p = V.period
    delta = discriminant_poly(V) if delta is None else delta
    out = []
    for k, shift in ((0.0, 2.0), (math.pi / p, -2.0)):
        g = delta - shift
        dg = g.deriv()
        seeds = np.linalg.eigvalsh(_edge_matrix(V, k))
        for i, s in enumerate(seeds):
            left = 0.5 * (seeds[i - 1] + s) if i > 0 else s - 1.0
            right = 0.5 * (seeds[i + 1] + s) if i + 1 < len(seeds) else s + 1.0
            # rounding in Delta's own coefficients survives the shift by 2
            out.append(polish_root(g, dg, s, bracket=(left, right),
                                   noise=lambda x: 8 * EPS * (delta.magnitude(x) + 2.0)))
    return np.sort(np.array(out))


def edge_signs(p: int) -> np.ndarray:
    """Delta(lambda_i) / 2 for i = 1..2p: +1 at the top edge, alternating in pairs."""
    i = np.arange(1, 2 * p + 1)
    band = (i + 1) // 2
    right = i % 2 == 0
    s = (-1.0) ** (p - band)
    return np.where(right, s, -s)


def critical_points(V: PeriodicPotential, edges: np.ndarray,
                    delta: RealPolynomial | None = None) -> np.ndarray:
    """The p-1 zeros of Delta', one in each (possibly closed) gap."""
    delta = discriminant_poly(V) if delta is None else delta
    d1, d2 = delta.deriv(), delta.deriv(2)
    tol = gap_closed_threshold(edges)
    out = []
    for j in range(1, V.period):
        a, b = edges[2 * j - 1], edges[2 * j]
        if b - a <= tol:
            out.append(0.5 * (a + b))
            continue
        x = bisect_root(d1, a, b)
        # bisection gives machine resolution already; one safeguarded Newton
        # step cleans up the last ulp when the slope is large
        try:
            x = polish_root(d1, d2, x, bracket=(a, b), maxiter=20,
                            noise=lambda y: 8 * EPS * d1.magnitude(y))
        except RootPolishFailure:
            pass
        out.append(x)
    return np.array(out)


@dataclass(frozen=True)
class SpectralPortrait:
    potential: PeriodicPotential
    delta: RealPolynomial = field(repr=False)
    edges: np.ndarray = field(repr=False)
    critical: np.ndarray = field(repr=False)
    gap_open: np.ndarray = field(repr=False)

    @property
    def period(self) -> int:
        return self.potential.period

    @property
    def bands(self) -> list[tuple[float, float]]:
        e = self.edges
        return [(float(e[2 * j]), float(e[2 * j + 1])) for j in range(self.period)]

    @property
    def edge_signs(self) -> np.ndarray:
        return edge_signs(self.period)

    @cached_property
    def delta_derivs(self) -> tuple[RealPolynomial, RealPolynomial, RealPolynomial]:
        return self.delta.deriv(1), self.delta.deriv(2), self.delta.deriv(3)

    @property
    def diameter(self) -> float:
        return float(self.edges[-1] - self.edges[0])

    def components(self) -> list[tuple[float, float, list[int]]]:
        """Connected components of the spectrum as (lo, hi, [band indices 1-based])."""
        comps = []
        lo, members = self.edges[0], [1]
        for j in range(1, self.period):
            if not self.gap_open[j - 1]:
                members.append(j + 1)
                continue
            comps.append((float(lo), float(self.edges[2 * j - 1]), members))
            lo, members = self.edges[2 * j], [j + 1]
        comps.append((float(lo), float(self.edges[-1]), members))
        return comps

    def closed_gap_energies(self) -> np.ndarray:
        return self.critical[~self.gap_open] if self.period > 1 else np.array([])


def spectral_portrait(V: PeriodicPotential) -> SpectralPortrait:
    delta = discriminant_poly(V)
    edges = band_edges(V, delta)
    crit = critical_points(V, edges, delta)
    tol = gap_closed_threshold(edges)
    gaps = edges[2::2] - edges[1:-1:2]
    return SpectralPortrait(V, delta, edges, crit, gaps > tol)
