"""First-order limits for the spiked model: outliers, alignments, projection sums."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .equivalents import quantiles
from .errors import DimensionMismatch, InadmissibleSpike, WeightBoundViolation
from .model import spike_window

NEAR_CRITICAL_MARGIN = 1e-6


@dataclass(frozen=True)
class OutlierPrediction:
    i: int
    d: float
    sigma_tilde: float
    a: float | None
    b: float | None
    m_at_a: float
    admissible: bool
    edge_margin: float | None
    near_critical: bool = False

    def as_dict(self):
        return {
            "i": self.i, "d": self.d, "sigma_tilde": self.sigma_tilde,
            "a": self.a, "b": self.b, "admissible": self.admissible,
            "edge_margin": self.edge_margin, "near_critical": self.near_critical,
        }


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """Positive weights l_1..l_p with tau <= l_j <= 1/tau."""

    ells: np.ndarray
    tau: float = 1e-3

    def __post_init__(self):
        ells = np.asarray(self.ells, dtype=float).ravel()
        if not np.all(np.isfinite(ells)):
            raise WeightBoundViolation("weights must be finite")
        if np.any(ells < self.tau) or np.any(ells > 1 / self.tau):
            raise WeightBoundViolation(f"weights must lie in [{self.tau}, {1 / self.tau}]")
        object.__setattr__(self, "ells", ells)

    @classmethod
    def ones(cls, p):
        return cls(np.ones(p))


def _spike(model, i):
    if not 1 <= i <= model.r:
        raise IndexError(f"spike index {i} out of range 1..{model.r}")
    return float(model.tilde_sigmas[i - 1])


def critical_sigma(law):
    """Spiked eigenvalue at which an outlier starts to separate from the bulk."""
    return -law.sqphi / law.c1


def _spike_point(law, model, i):
    """-sqrt(phi)/sigma_tilde_i, after rejecting subcritical spikes."""
    st = _spike(model, i)
    if not st > critical_sigma(law):
        raise InadmissibleSpike(
            f"spike {i}: sigma_tilde={st} is not above the critical value {critical_sigma(law)}")
    return -law.sqphi / st


def outlier_location(law, model, i):
    """Limit a_i of the i-th largest eigenvalue (1-based spike index)."""
    return float(law.f(_spike_point(law, model, i)))


def outlier_alignment(law, model, i):
    """Limit b_i of the squared projection of the i-th eigenvector on v_i."""
    x = _spike_point(law, model, i)
    return float(-x * law.f(x, 1) / law.f(x))


def _check_weights(model, ell):
    if ell.ells.size != model.p:
        raise DimensionMismatch(f"weights have length {ell.ells.size}, expected p={model.p}")
    head = ell.ells[: model.r + 1]
    if not np.allclose(head, head[0], rtol=1e-12, atol=0):
        raise WeightBoundViolation("weights must satisfy l_1 = ... = l_{r+1}")


def _m_dot_from_sum(law, model, i, weighted_sum):
    x = _spike_point(law, model, i)
    a = law.f(x)
    m_prime = 1.0 / law.f(x, 1)
    return float(law.phi * m_prime / (model.p * a) * weighted_sum)


def m_dot(law, model, i, ell: WeightSequence):
    """The weighted derivative term entering the projection-sum limit.

    m(a_i) = -sqrt(phi)/sigma_tilde_i and m'(a_i) = 1/f'(m(a_i)) are used in
    closed form rather than through the Stieltjes solver.
    """
    _check_weights(model, ell)
    x = _spike_point(law, model, i)
    sig = model.spectrum.sigmas()
    total = np.sum((ell.ells / sig) / (x / law.sqphi + 1 / sig) ** 2)
    return _m_dot_from_sum(law, model, i, total)


def _projection_limit(law, model, i, md):
    a = outlier_location(law, model, i)
    b = outlier_alignment(law, model, i)
    return a * b * _spike(model, i) * md / law.phi


def weighted_projection_sum(law, model, i, ell: WeightSequence):
    """Limit of sum_{j>r} l_j <u_i, v_j>^2 for an outlier eigenvector u_i."""
    return float(_projection_limit(law, model, i, m_dot(law, model, i, ell)))


def explained_variance(law, model, i):
    """Limit of u_i^T Sigma u_i: spike term plus the bulk term with l_j = sigma_j.

    The weights l_j = sigma_j are plugged in directly; the equal-leading-weights
    hypothesis of the projection-sum limit is not checked here.
    """
    x = _spike_point(law, model, i)
    sp = model.spectrum
    total = sp.mults @ (1.0 / (x / law.sqphi + 1 / sp.values) ** 2)
    md = _m_dot_from_sum(law, model, i, total)
    st = _spike(model, i)
    return float(st * outlier_alignment(law, model, i) + _projection_limit(law, model, i, md))


def predict_outliers(law, model):
    """One OutlierPrediction per spike; subcritical spikes get a = b = None."""
    lower, upper = spike_window(model.phi, law.c1, model.spikes.varpi)
    out = []
    for k, (d, st) in enumerate(zip(model.spikes.ds, model.tilde_sigmas), start=1):
        st = float(st)
        x = -law.sqphi / st
        in_window = bool(lower < st < upper)
        if st > critical_sigma(law):
            a = outlier_location(law, model, k)
            b = outlier_alignment(law, model, k)
            margin = a - law.gamma_plus
            near = margin < NEAR_CRITICAL_MARGIN
            if near:
                warnings.warn(f"spike {k} is near critical: edge margin {margin:.3g}")
            out.append(OutlierPrediction(k, d, st, a, b, x, in_window, margin, near))
        else:
            out.append(OutlierPrediction(k, d, st, None, None, x, False, None, False))
    return out


@dataclass(frozen=True)
class NonOutlierTarget:
    i: int          # sample eigenvalue index, r < i <= n
    gamma: float    # quantile gamma_{i-r}
    envelope: float


def rate_envelope(i, n):
    return min(i, n + 1 - i) ** (-1 / 3) * n ** (-2 / 3)


def nonoutlier_targets(law, model, n=None, gammas=None):
    """Pair each non-outlier eigenvalue index i with the quantile gamma_{i-r}."""
    n = model.n if n is None else n
    if gammas is None:
        gammas = quantiles(law, n)
    r = model.r
    return [NonOutlierTarget(i, float(gammas[i - r - 1]), rate_envelope(i, n))
            for i in range(r + 1, n + 1)]
