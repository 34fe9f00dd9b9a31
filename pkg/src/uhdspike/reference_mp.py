"""Closed-form Marchenko-Pastur case (identity population covariance).

Kept independent of the general solver so it can serve as an oracle for it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPhi, Subcritical


@dataclass(frozen=True)
class MpLaw:
    phi: float
    gamma_minus: float
    gamma_plus: float
    c1: float
    c2: float


def mp_law(phi) -> MpLaw:
    if not phi > 1:
        raise InvalidPhi(f"phi must exceed 1, got {phi}")
    s = np.sqrt(phi)
    return MpLaw(
        phi=float(phi),
        gamma_minus=float(s + 1 / s - 2),
        gamma_plus=float(s + 1 / s + 2),
        c1=float(-1 / (1 + 1 / s)),
        c2=float(1 / (1 - 1 / s)),
    )


def mp_f(phi, x):
    s = np.sqrt(phi)
    return -1 / x + s / (1 + x / s)


def mp_density(phi, E):
    law = mp_law(phi)
    E = np.asarray(E, dtype=float)
    inner = np.clip((E - law.gamma_minus) * (law.gamma_plus - E), 0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(phi) / (2 * np.pi) * np.sqrt(inner) / E
    return np.where(inner > 0, out, 0.0)


def mp_m(phi, z):
    """Stieltjes transform from the quadratic (z/s) m^2 + (z + 1/s - s) m + 1 = 0, s = sqrt(phi).

    Picks the root with Im m > 0, or for real z off the support the root of
    smaller modulus (the one continuous with m ~ -1/z at infinity).
    """
    if not phi > 1:
        raise InvalidPhi(f"phi must exceed 1, got {phi}")
    s = np.sqrt(phi)
    z = np.asarray(z, dtype=complex)
    a = z / s
    b = z + 1 / s - s
    disc = np.sqrt(b * b - 4 * a)
    # numerically stable pair of roots
    disc = np.where((np.conj(b) * disc).real >= 0, disc, -disc)
    q = -0.5 * (b + disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / a
        r2 = 1 / q
    linear = a == 0
    r1 = np.where(linear, -1 / b, r1)
    r2 = np.where(linear, -1 / b, r2)
    pick_up = np.where(r1.imag >= r2.imag, r1, r2)
    pick_small = np.where(np.abs(r1) <= np.abs(r2), r1, r2)
    # two real roots: real z outside the support
    out = np.where(r1.imag == r2.imag, pick_small, pick_up)
    return out.item() if out.ndim == 0 else out


def mp_outlier(phi, d):
    """Outlier location and squared alignment for a spike of strength d."""
    s = np.sqrt(phi)
    if not d > s:
        raise Subcritical(f"spike d={d} does not exceed sqrt(phi)={s}")
    a = s + 1 / s + d / s + s / d
    b = (1 - phi / d**2) / (1 + phi / d)
    return float(a), float(b)
