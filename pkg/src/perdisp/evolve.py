"""Time evolution on finite windows of Z: linear flow, sup-norm decay, DNLS.

Two window types are offered.  A ``ring`` of L whole periods is diagonalised
exactly by the Bloch transform (FFT over cells plus a p x p eigenproblem per
quasimomentum).  A ``dirichlet`` segment [-R, R] is diagonalised directly.
Either agrees with the flow on Z as long as the light cone of the initial
support stays inside the window; that is checked before every run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .bloch import band_decomposition
from .errors import ConeViolation, InsufficientData, StepRejected
from .potential import PeriodicPotential
from .propagator import WavePacket, max_velocity

DEFAULT_MARGIN = 20
# the fronts carry Airy tails of width ~ t^{1/3}; this many widths pushes
# them below 1e-12 before they reach the window boundary
AIRY_WIDTHS = 12
LOCAL_ERROR_TOL = 1e-6


@dataclass(frozen=True)
class LatticeWindow:
    """A finite piece of Z: sites first..last."""
    boundary: str
    first: int
    last: int

    def __post_init__(self):
        if self.boundary not in ("ring", "dirichlet"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.last < self.first:
            raise ValueError("empty window")

    @classmethod
    def dirichlet(cls, radius: int) -> "LatticeWindow":
        return cls("dirichlet", -radius, radius)

    @classmethod
    def ring(cls, period: int, cells: int) -> "LatticeWindow":
        lo = -(cells // 2)
        return cls("ring", lo * period + 1, (lo + cells) * period)

    @property
    def size(self) -> int:
        return self.last - self.first + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1)

    @staticmethod
    def reach(T: float, vmax: float, margin: int = DEFAULT_MARGIN) -> int:
        """Sites beyond the initial support that the solution can touch by time T."""
        T = abs(T)
        return int(math.ceil(vmax * T)) + margin + int(math.ceil(AIRY_WIDTHS * T ** (1 / 3)))

    def covers(self, psi: WavePacket, T: float, vmax: float, margin: int = DEFAULT_MARGIN) -> bool:
        r = self.reach(T, vmax, margin)
        return self.first <= psi.first - r and psi.last + r <= self.last

    def check_cone(self, psi: WavePacket, T: float, vmax: float, margin: int = DEFAULT_MARGIN):
        if not self.covers(psi, T, vmax, margin):
            r = self.reach(T, vmax, margin)
            raise ConeViolation(
                f"cone [{psi.first - r}, {psi.last + r}] leaves window [{self.first}, {self.last}]")

    @classmethod
    def for_run(cls, V: PeriodicPotential, psi: WavePacket, T: float, boundary: str = "ring",
                margin: int = DEFAULT_MARGIN, vmax: float | None = None) -> "LatticeWindow":
        """Smallest window of the given type that contains the light cone."""
        vmax = max_velocity(V) if vmax is None else vmax
        r = cls.reach(T, vmax, margin)
        lo, hi = psi.first - r, psi.last + r
        if boundary == "dirichlet":
            return cls.dirichlet(max(-lo, hi, 1))
        p = V.period
        cells = 2 * (max(-lo, hi) // p + 2)
        return cls.ring(p, cells)

    def embed(self, psi: WavePacket) -> np.ndarray:
        out = np.zeros(self.size, dtype=complex)
        i0 = psi.first - self.first
        if i0 < 0 or i0 + len(psi.amplitudes) > self.size:
            raise ConeViolation("initial datum is not inside the window")
        out[i0:i0 + len(psi.amplitudes)] = psi.amplitudes
        return out

    def packet(self, values: np.ndarray) -> WavePacket:
        return WavePacket(self.first, values)


class RingPropagator:
    """Exact e^{-itH} on a ring of L periods via the Bloch transform."""

    def __init__(self, V: PeriodicPotential, window: LatticeWindow):
        p = V.period
        if window.boundary != "ring" or window.size % p or (window.first - 1) % p:
            raise ValueError("ring propagator needs a window of whole periods")
        self.p = p
        self.cells = window.size // p
        k = 2 * math.pi * np.arange(self.cells) / (self.cells * p)
        self.E, self.U = band_decomposition(V, k)

    def __call__(self, values: np.ndarray, t: float) -> np.ndarray:
        # rows are cells, columns are positions m = 1..p inside a cell
        x = values.reshape(self.cells, self.p)
        xh = np.fft.fft(x, axis=0)
        c = np.einsum("lmj,lm->lj", self.U.conj(), xh) * np.exp(-1j * t * self.E)
        yh = np.einsum("lmj,lj->lm", self.U, c)
        return np.fft.ifft(yh, axis=0).reshape(-1)


class DirichletPropagator:
    """Exact e^{-itH} on [first, last] with zero boundary values."""

    def __init__(self, V: PeriodicPotential, window: LatticeWindow):
        self.lam, self.W = eigh_tridiagonal(V.at(window.sites).astype(float),
                                            np.ones(window.size - 1))

    def __call__(self, values: np.ndarray, t: float) -> np.ndarray:
        return self.W @ (np.exp(-1j * t * self.lam) * (self.W.T @ values))


def make_propagator(V: PeriodicPotential, window: LatticeWindow):
    return RingPropagator(V, window) if window.boundary == "ring" else DirichletPropagator(V, window)


def linear_evolve(V: PeriodicPotential, psi0: WavePacket, times, window: LatticeWindow | None = None,
                  boundary: str = "ring", margin: int = DEFAULT_MARGIN) -> list[WavePacket]:
    """e^{-itH} psi0 at each requested time, restricted to the window."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    T = float(np.max(np.abs(times), initial=0.0))
    vmax = max_velocity(V)
    if window is None:
        window = LatticeWindow.for_run(V, psi0, T, boundary, margin, vmax)
    window.check_cone(psi0, T, vmax, margin)
    prop = make_propagator(V, window)
    x0 = window.embed(psi0)
    return [window.packet(prop(x0, float(t))) for t in times]


# ---------------------------------------------------------------------------
# decay measurement


def fit_decay_exponent(times, values, window: tuple[float, float | None] = (10.0, None)):
    """OLS slope of log(value) against log(t) on the fit window; returns (alpha, stderr).

    alpha is the slope itself, so values ~ t^alpha (free decay gives -1/3).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    lo, hi = window
    sel = t >= lo
    if hi is not None:
        sel &= t <= hi
    t, y = t[sel], y[sel]
    if len(t) < 10:
        raise InsufficientData(f"{len(t)} samples in the fit window; need at least 10")
    if np.any(y <= 0) or np.any(t <= 0):
        raise InsufficientData("fit needs positive times and values")
    X = np.log(t)
    Y = np.log(y)
    xm = X - X.mean()
    slope = float(np.dot(xm, Y - Y.mean()) / np.dot(xm, xm))
    resid = Y - Y.mean() - slope * xm
    stderr = float(math.sqrt(np.dot(resid, resid) / (len(t) - 2) / np.dot(xm, xm)))
    return slope, stderr


@dataclass
class DecaySeries:
    times: np.ndarray = field(repr=False)
    sup_norms: np.ndarray = field(repr=False)
    l1: float
    alpha: float | None = None
    stderr: float | None = None

    @property
    def ratio(self) -> np.ndarray:
        """sup_norm * <t>^{1/3} / ||psi0||_1."""
        return self.sup_norms * (1 + self.times ** 2) ** (1 / 6) / self.l1

    def tail_mean_ratio(self, lo: float, hi: float) -> float:
        sel = (self.times >= lo) & (self.times <= hi)
        return float(np.mean(self.ratio[sel]))


def sup_norm_decay(V: PeriodicPotential, psi0: WavePacket, times, window: LatticeWindow | None = None,
                   boundary: str = "ring", margin: int = DEFAULT_MARGIN,
                   fit_window: tuple[float, float | None] | None = (10.0, None)) -> DecaySeries:
    times = np.asarray(times, dtype=float)
    states = linear_evolve(V, psi0, times, window, boundary, margin)
    sup = np.array([s.linf for s in states])
    series = DecaySeries(times, sup, psi0.l1)
    if fit_window is not None:
        try:
            series.alpha, series.stderr = fit_decay_exponent(times, sup, fit_window)
        except InsufficientData:
            pass
    return series


# ---------------------------------------------------------------------------
# discrete nonlinear Schroedinger


@dataclass
class DnlsRun:
    times: np.ndarray = field(repr=False)
    states: list[WavePacket] = field(repr=False)
    sigma: float
    sign: int
    dt: float
    max_local_error: float = 0.0

    @property
    def sup_norms(self) -> np.ndarray:
        return np.array([s.linf for s in self.states])

    @property
    def l2_norms(self) -> np.ndarray:
        return np.array([s.l2 for s in self.states])


def _nonlinear_phase(x: np.ndarray, sigma: float, sign: int, tau: float) -> np.ndarray:
    # i u' = sign |u|^{sigma-1} u conserves |u|, so the flow is a pure phase
    return x * np.exp(-1j * sign * np.abs(x) ** (sigma - 1) * tau)


def _strang(prop, x, sigma, sign, dt):
    x = _nonlinear_phase(x, sigma, sign, dt / 2)
    x = prop(x, dt)
    return _nonlinear_phase(x, sigma, sign, dt / 2)


def max_dnls_step(V: PeriodicPotential, psi0: WavePacket, sigma: float) -> float:
    """0.1 / (2 + ||V||_inf + ||psi0||_inf^{sigma-1})."""
    return 0.1 / (2 + V.sup_norm + psi0.linf ** (sigma - 1))


def dnls_evolve(V: PeriodicPotential, psi0: WavePacket, sigma: float, sign: int, dt: float, times,
                window: LatticeWindow | None = None, boundary: str = "ring",
                margin: int = DEFAULT_MARGIN, check_every: int = 100,
                local_tol: float = LOCAL_ERROR_TOL) -> DnlsRun:
    """Strang splitting for i u' = H u + sign |u|^{sigma-1} u (sign +1 defocusing).

    The linear substep is the exact window propagator.  Every ``check_every``
    steps the step is redone as two half steps; a relative discrepancy above
    ``local_tol`` raises StepRejected.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
    if sigma < 1:
        raise ValueError("sigma must be at least 1")
    vmax = max_velocity(V)
    dt_max = max_dnls_step(V, psi0, sigma)
    if not 0 < dt <= dt_max:
        raise ValueError(f"dt={dt} violates 0 < dt <= {dt_max:.6g}")
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if np.any(times < 0):
        raise ValueError("dnls times must be non-negative")
    T = float(times[-1]) if len(times) else 0.0
    if window is None:
        window = LatticeWindow.for_run(V, psi0, T, boundary, margin, vmax)
    window.check_cone(psi0, T, vmax, margin)
    prop = make_propagator(V, window)
    x = window.embed(psi0)
    now, steps, worst = 0.0, 0, 0.0
    states = []
    for target in times:
        while now < target - 1e-12 * max(1.0, target):
            h = min(dt, target - now)
            nxt = _strang(prop, x, sigma, sign, h)
            steps += 1
            if steps % check_every == 0:
                half = _strang(prop, _strang(prop, x, sigma, sign, h / 2), sigma, sign, h / 2)
                scale = max(float(np.max(np.abs(x))), 1e-300)
                err = float(np.max(np.abs(nxt - half))) / scale
                worst = max(worst, err)
                if err > local_tol:
                    raise StepRejected(f"local error {err:.2e} at t={now:.4g}; reduce dt")
            x = nxt
            now += h
        states.append(window.packet(x.copy()))
    return DnlsRun(times, states, sigma, sign, dt, worst)
