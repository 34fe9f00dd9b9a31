"""Deterministic equivalent of the non-spiked sample covariance spectrum.

The limiting law is described through its Stieltjes transform ``m(z)``, the
solution in the upper half plane of ``z = f(m)`` with

    f(x) = -1/x + sqrt(phi) * sum_k w_k s_k / (1 + s_k x / sqrt(phi)),

where ``(s_k, w_k)`` are the atoms and masses of the population spectrum.
Everything here works on the atom-compressed spectrum, so evaluating ``f``
costs O(#atoms) regardless of p.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq

from .errors import BracketFailure, NonConvergence, PoleProximity, QuadratureFailure, WrongBranch

RESIDUAL_TOL = 1e-12
POLE_TOL = 1e-12
MASS_TOL = 1e-6
_NEWTON_TOL = 1e-14
_FIXED_POINT_ITERS = 50
_FIXED_POINT_DAMPING = 0.5
_MAX_CONTINUATION_STEPS = 5000
_MAX_SERIES_NODES = 1 << 16


def _atom_sums(x, values, weights, sqphi, order):
    """Sum_k w_k s_k^(order+1) / (1 + s_k x / sqphi)^(order+1), vectorized over x."""
    x = np.asarray(x)
    denom = 1.0 + np.multiply.outer(x, values / sqphi)
    return (weights * values ** (order + 1) / denom ** (order + 1)).sum(axis=-1)


def _f(x, values, weights, sqphi):
    return -1.0 / x + sqphi * _atom_sums(x, values, weights, sqphi, 0)


def _f1(x, values, weights, sqphi):
    return 1.0 / x**2 - _atom_sums(x, values, weights, sqphi, 1)


def _f2(x, values, weights, sqphi):
    return -2.0 / x**3 + 2.0 / sqphi * _atom_sums(x, values, weights, sqphi, 2)


_DERIVS = (_f, _f1, _f2)


@dataclass(frozen=True, eq=False)
class EquivalentLaw:
    """Solved non-spiked law: critical points, edges and mean of the spectrum.

    Build with :func:`equivalent_law`; the fields are cached and the object is
    immutable, so it can be shared between workers.
    """

    phi: float
    values: np.ndarray
    weights: np.ndarray
    c1: float = field(default=np.nan)
    c2: float = field(default=np.nan)
    gamma_minus: float = field(default=np.nan)
    gamma_plus: float = field(default=np.nan)
    m1: float = field(default=np.nan)

    @property
    def sqphi(self) -> float:
        return float(np.sqrt(self.phi))

    @property
    def poles(self) -> np.ndarray:
        return -self.sqphi / self.values

    def f(self, x, order=0):
        return _DERIVS[order](x, self.values, self.weights, self.sqphi)

    @cached_property
    def _series(self):
        return _cumulative_series(self)

    @property
    def mass(self) -> float:
        """Total mass of the density on [gamma_minus, gamma_plus] before normalization."""
        return self._series[1]


def f_eval(law, x, order=0):
    """Evaluate f, f' or f'' at real or complex ``x``.

    Raises PoleProximity if any point is within relative 1e-12 of the pole
    set {0} U {-sqrt(phi)/sigma_k}.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    xa = np.asarray(x)
    _check_poles(law, xa)
    out = law.f(xa, order)
    return out.item() if np.ndim(out) == 0 else out


def _check_poles(law, x):
    x = np.atleast_1d(x)
    if np.any(np.abs(x) < POLE_TOL):
        raise PoleProximity("f evaluated within 1e-12 of the pole at 0")
    poles = law.poles
    dist = np.abs(np.subtract.outer(x, poles))
    if np.any(dist < POLE_TOL * np.abs(poles)):
        raise PoleProximity("f evaluated within relative 1e-12 of a pole -sqrt(phi)/sigma")


def _polish(g, g1, x, lo, hi, iters=3):
    """A few guarded Newton steps on g, staying inside (lo, hi)."""
    for _ in range(iters):
        d = g1(x)
        if d == 0 or not np.isfinite(d):
            break
        nxt = x - g(x) / d
        if not lo < nxt < hi:
            break
        if abs(g(nxt)) > abs(g(x)):
            break
        x = nxt
    return x


def critical_points(phi, values, weights):
    """Roots of f' in (-sqrt(phi)/sigma_1, 0) and in (0, inf).

    Brackets are located where f' provably changes sign; a bracketed root
    finder then refines, followed by Newton polish using f''.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    sq = np.sqrt(phi)
    f1 = lambda x: float(_f1(x, values, weights, sq))
    f2 = lambda x: float(_f2(x, values, weights, sq))
    pole = -sq / values.max()

    left = next((pole * (1 - 10.0**-k) for k in range(1, 13)
                 if f1(pole * (1 - 10.0**-k)) < 0), None)
    right = next((pole * 10.0**-k for k in range(1, 13) if f1(pole * 10.0**-k) > 0), None)
    if left is None or right is None or not left < right:
        raise BracketFailure("no sign change of f' on (-sqrt(phi)/sigma_1, 0)")
    c1 = brentq(f1, left, right, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    c1 = _polish(f1, f2, c1, pole, 0.0)

    lo = next((10.0**-k for k in range(1, 13) if f1(10.0**-k) > 0), None)
    hi = next((2.0**k for k in range(0, 60) if f1(2.0**k) < 0), None)
    if lo is None or hi is None or not lo < hi:
        raise BracketFailure("no sign change of f' on (0, inf); phi may be too close to 1")
    c2 = brentq(f1, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    c2 = _polish(f1, f2, c2, 0.0, np.inf)

    for c in (c1, c2):
        if abs(f1(c)) > RESIDUAL_TOL * max(1.0, abs(f2(c))):
            raise BracketFailure(f"critical point {c} not resolved: f'={f1(c)}")
    return float(c1), float(c2)


def _check_single_bulk(law, samples=400):
    """Reject spectra whose support splits into several intervals.

    A real x with f'(x) > 0 maps to a point outside the support, so any such
    x between two poles with gamma_- < f(x) < gamma_+ marks a gap.
    """
    poles = np.sort(law.poles)
    if poles.size < 2 or poles.size > 256:
        return
    t = (np.arange(samples) + 0.5) / samples
    for a, b in zip(poles[:-1], poles[1:]):
        x = a + (b - a) * t
        d = law.f(x, 1)
        v = law.f(x)
        if np.any((d > 0) & (v > law.gamma_minus) & (v < law.gamma_plus)):
            raise BracketFailure("support has more than one component; not supported")


def equivalent_law(spectrum, phi) -> EquivalentLaw:
    """Solve the non-spiked law for a population spectrum and ratio phi = p/n."""
    values = np.asarray(spectrum.values, dtype=float)
    weights = np.asarray(spectrum.weights, dtype=float)
    c1, c2 = critical_points(phi, values, weights)
    sq = np.sqrt(phi)
    gp = float(_f(c1, values, weights, sq))
    gm = float(_f(c2, values, weights, sq))
    if not gp >= gm > 0:
        raise BracketFailure(f"edges out of order: gamma_-={gm}, gamma_+={gp}")
    law = EquivalentLaw(float(phi), values, weights, c1, c2, gm, gp, float(weights @ values))
    _check_single_bulk(law)
    return law


def law_for_model(model) -> EquivalentLaw:
    return equivalent_law(model.spectrum, model.phi)


def edges(law):
    return law.gamma_minus, law.gamma_plus


# ---------------------------------------------------------------------------
# Stieltjes transform


def _newton(law, m, z, maxit=60):
    """Newton on f(m) - z with step halving; vectorized over points."""
    m = m.copy()
    h = law.f(m) - z
    tol = _NEWTON_TOL * np.maximum(1.0, np.abs(z))
    stalled = np.zeros(m.shape, dtype=bool)
    for _ in range(maxit):
        idx = np.flatnonzero(~(np.abs(h) <= tol) & ~stalled)
        if idx.size == 0:
            break
        ma, ha, za = m[idx], h[idx], z[idx]
        step = ha / law.f(ma, 1)
        t = np.ones(idx.size)
        cand = ma - step
        hc = law.f(cand) - za
        for _ in range(30):
            bad = ~(np.abs(hc) < np.abs(ha))
            if not bad.any():
                break
            t[bad] *= 0.5
            cand[bad] = ma[bad] - t[bad] * step[bad]
            hc[bad] = law.f(cand[bad]) - za[bad]
        improved = np.abs(hc) < np.abs(ha)
        stalled[idx[~improved]] = True
        m[idx[improved]] = cand[improved]
        h[idx[improved]] = hc[improved]
    ok = np.abs(h) <= RESIDUAL_TOL * np.maximum(1.0, np.abs(z))
    return m, ok


def _fixed_point(law, z):
    """Damped iteration m <- -1/(z - S(m)); keeps m in the upper half plane."""
    sq = law.sqphi
    m = -1.0 / z
    for _ in range(_FIXED_POINT_ITERS):
        s = sq * _atom_sums(m, law.values, law.weights, sq, 0)
        m = (1 - _FIXED_POINT_DAMPING) * m + _FIXED_POINT_DAMPING * (-1.0 / (z - s))
    return m


def _real_branch(law, E, lo, hi, start):
    """Bracketed Newton for real f(m) = E with f increasing on (lo, hi)."""
    lo = np.full(E.shape, lo, dtype=float)
    hi = np.full(E.shape, hi, dtype=float)
    m = start.astype(float)
    tol = _NEWTON_TOL * np.maximum(1.0, np.abs(E))
    for _ in range(400):
        h = law.f(m) - E
        done = (np.abs(h) <= tol) | (hi - lo <= 4 * np.finfo(float).eps * np.abs(m))
        if done.all():
            break
        lo = np.where(h < 0, m, lo)
        hi = np.where(h > 0, m, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = m - h / law.f(m, 1)
        inside = (nxt > lo) & (nxt < hi)
        m = np.where(done, m, np.where(inside, nxt, 0.5 * (lo + hi)))
    res = np.abs(law.f(m) - E)
    if np.any(~(res <= RESIDUAL_TOL * np.maximum(1.0, np.abs(E)))):
        raise NonConvergence("real-axis solve of z = f(m) did not converge")
    return m


def _continuation(law, E, eta_target):
    """Follow the upper-half-plane root from eta >= 1 down to eta_target."""
    eta0 = np.maximum(eta_target, 1.0)
    z0 = E + 1j * eta0
    m, ok = _newton(law, _fixed_point(law, z0), z0)
    if not ok.all() or np.any(m.imag <= 0):
        raise NonConvergence("initial fixed-point/Newton solve failed at eta >= 1")

    eta = eta0.copy()
    q = np.full(E.shape, 0.5)
    floor = 1e-13 * np.maximum(1.0, np.abs(E))
    active = eta > eta_target
    steps = 0
    while active.any():
        steps += 1
        if steps > _MAX_CONTINUATION_STEPS:
            raise NonConvergence("continuation in eta exceeded the step budget")
        idx = np.flatnonzero(active)
        tgt = eta_target[idx]
        nxt = eta[idx] * q[idx]
        nxt = np.where(nxt < floor[idx], tgt, np.maximum(nxt, tgt))
        zn = E[idx] + 1j * nxt
        mp = m[idx]
        guess = mp + 1j * (nxt - eta[idx]) / law.f(mp, 1)
        mn, conv = _newton(law, guess, zn)
        on_axis = nxt == 0
        # on the real axis roots come in conjugate pairs; keep the upper one
        mn = np.where(on_axis, mn.real + 1j * np.abs(mn.imag), mn)
        branch = np.where(on_axis, np.abs(mn - mp) <= 1e-4 * np.maximum(1.0, np.abs(mp)),
                          mn.imag > 0)
        good = conv & branch & np.isfinite(mn)
        acc, rej = idx[good], idx[~good]
        m[acc] = mn[good]
        eta[acc] = nxt[good]
        q[acc] = np.maximum(q[acc] ** 2, 0.05)
        q[rej] = np.sqrt(q[rej])
        if np.any(q[rej] > 0.9999):
            bad = ~good & (q[idx] > 0.9999)
            if np.any(mn[bad].imag < -1e-10):
                raise WrongBranch("continuation left the upper half plane")
            raise NonConvergence("continuation step collapsed")
        active = eta > eta_target
    return m


def solve_m(law, z):
    """Stieltjes transform m(z) of the limiting law.

    ``z`` may be a scalar or array with Im z >= 0. Real points outside the
    support return the real solution; real points inside the support return
    the boundary value with Im m > 0.
    """
    za = np.asarray(z, dtype=complex)
    scalar = za.ndim == 0
    za = np.atleast_1d(za).ravel()
    E, eta = za.real.copy(), za.imag.copy()
    if np.any(eta < 0) or not np.all(np.isfinite(za)):
        raise ValueError("z must be finite with Im z >= 0")
    out = np.empty(za.shape, dtype=complex)

    real = eta == 0
    upper = real & (E >= law.gamma_plus)
    lower = real & (E <= law.gamma_minus)
    if upper.any():
        # f(-1/E) > E on (c1, 0), so -1/E sits right of the root
        out[upper] = _real_branch(law, E[upper], law.c1, 0.0, -1.0 / E[upper])
    if lower.any():
        out[lower] = _real_branch(law, E[lower], 0.0, law.c2,
                                  np.full(lower.sum(), 0.5 * law.c2))
    rest = ~(upper | lower)
    if rest.any():
        out[rest] = _continuation(law, E[rest], eta[rest])
    out = out.reshape(np.shape(z))
    return out.item() if scalar else out


def m_prime(law, m):
    """dm/dz at a point where m = m(z), by implicit differentiation."""
    return 1.0 / law.f(np.asarray(m), 1)


# ---------------------------------------------------------------------------
# Density and quantiles


def density(law, E):
    """Density of the limiting law; zero outside [gamma_-, gamma_+]."""
    Ea = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.zeros(Ea.shape)
    inside = (Ea > law.gamma_minus) & (Ea < law.gamma_plus)
    if inside.any():
        out[inside] = solve_m(law, Ea[inside].astype(complex)).imag / np.pi
    return out.item() if np.ndim(E) == 0 else out


def _theta_to_E(law, theta):
    half = 0.5 * (law.gamma_plus - law.gamma_minus)
    return law.gamma_minus + half * (1.0 - np.cos(theta))


def _E_to_theta(law, E):
    half = 0.5 * (law.gamma_plus - law.gamma_minus)
    return np.arccos(np.clip(1.0 - (np.asarray(E) - law.gamma_minus) / half, -1.0, 1.0))


def _integrand(law, K):
    """Density in the edge-clustered variable at the K midpoint nodes."""
    theta = (np.arange(K) + 0.5) * np.pi / K
    half = 0.5 * (law.gamma_plus - law.gamma_minus)
    return theta, density(law, _theta_to_E(law, theta)) * half * np.sin(theta)


def _cumulative_series(law):
    """Cosine-series model of the density in theta, where E = g- + D(1 - cos theta)/2.

    The square-root edges make the integrand an even analytic function of
    theta, so its cosine coefficients decay geometrically. Nodes are doubled
    until the tail coefficients are negligible.
    """
    K = 64
    while True:
        _, g = _integrand(law, K)
        a = dct(g, type=2) / K
        tail = np.abs(a[K // 2:]).max()
        if tail <= 1e-14 * abs(a[0]) or K >= _MAX_SERIES_NODES:
            break
        K *= 2
    mass = 0.5 * np.pi * a[0]
    if not abs(mass - 1.0) <= MASS_TOL:
        raise QuadratureFailure(f"density integrates to {mass!r}, expected 1 within {MASS_TOL}")
    return a, float(mass)


def _cumulative_theta(a, theta):
    """Integral of the cosine series from 0 to theta (vectorized over theta)."""
    j = np.arange(1, a.size)
    theta = np.asarray(theta, dtype=float)
    return 0.5 * a[0] * theta + np.sin(np.multiply.outer(theta, j)) @ (a[1:] / j)


def counting_function(law, E):
    """N(E): normalized mass of the law above E."""
    a, mass = law._series
    Ea = np.asarray(E, dtype=float)
    out = 1.0 - _cumulative_theta(a, _E_to_theta(law, Ea)) / mass
    out = np.where(Ea >= law.gamma_plus, 0.0, np.where(Ea <= law.gamma_minus, 1.0, out))
    return out.item() if out.ndim == 0 else out


def quantiles(law, n, chunk=1024):
    """gamma_1 >= ... >= gamma_n with N(gamma_i) = i/n, by bisection in theta."""
    if n < 1:
        raise ValueError("n must be positive")
    a, mass = law._series
    targets = (1.0 - np.arange(1, n + 1) / n) * mass
    theta = np.empty(n)
    for start in range(0, n, chunk):
        t = targets[start:start + chunk]
        lo = np.zeros(t.size)
        hi = np.full(t.size, np.pi)
        # 1e-10 interval width in E needs fewer than 40 halvings of theta
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            below = _cumulative_theta(a, mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        theta[start:start + chunk] = 0.5 * (lo + hi)
    out = _theta_to_E(law, theta)
    out[-1] = law.gamma_minus
    return np.minimum.accumulate(out)


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    mass: float


def density_curve(law, K) -> DensityCurve:
    """Density on K edge-clustered points; mass by the midpoint rule in theta."""
    if K < 1:
        raise ValueError("grid size must be positive")
    theta = (np.arange(K) + 0.5) * np.pi / K
    E = _theta_to_E(law, theta)
    rho = density(law, E)
    half = 0.5 * (law.gamma_plus - law.gamma_minus)
    return DensityCurve(E, rho, float((rho * half * np.sin(theta)).sum() * np.pi / K))
