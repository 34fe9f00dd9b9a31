"""Population covariance model: non-spiked spectrum plus a few spikes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveEigenvalue, UnsortedInputRejected
from .rng import stream

MAX_SPIKES = 32
DEFAULT_VARPI = 0.05
DEFAULT_VARSIGMA = 0.01
# stream index reserved for the Haar eigenbasis draw
_HAAR_STREAM = 0xBA515


@dataclass(frozen=True)
class Dimensions:
    n: int
    p: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.p) != self.p:
            raise DimensionMismatch("n and p must be integers")
        if self.n < 2:
            raise DimensionMismatch(f"n must be at least 2, got {self.n}")
        if self.p <= self.n:
            raise DimensionMismatch(f"need p > n (phi > 1), got p={self.p}, n={self.n}")

    @property
    def phi(self) -> float:
        return self.p / self.n


@dataclass(frozen=True, eq=False)
class PopulationSpectrum:
    """Eigenvalues of the non-spiked covariance, stored as distinct atoms.

    ``values`` are distinct and strictly decreasing; ``mults`` are their
    multiplicities. The expanded length-p vector is available via ``sigmas``.
    """

    values: np.ndarray
    mults: np.ndarray
    varsigma: float = DEFAULT_VARSIGMA

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        mults = np.asarray(self.mults, dtype=np.int64).ravel()
        if values.shape != mults.shape or values.size == 0:
            raise DimensionMismatch("atom values and multiplicities must be non-empty and equal length")
        if not np.all(np.isfinite(values)):
            raise NonPositiveEigenvalue("spectrum contains non-finite values")
        if np.any(values <= 0):
            raise NonPositiveEigenvalue(f"spectrum must be positive, got min {values.min()}")
        if np.any(mults <= 0):
            raise DimensionMismatch("atom multiplicities must be positive")
        if not 0 < self.varsigma < 1:
            raise ValueError(f"varsigma must lie in (0, 1), got {self.varsigma}")
        # merge duplicates and sort descending
        uniq, inv = np.unique(values, return_inverse=True)
        merged = np.bincount(inv, weights=mults).astype(np.int64)
        object.__setattr__(self, "values", uniq[::-1].copy())
        object.__setattr__(self, "mults", merged[::-1].copy())

    @classmethod
    def from_sigmas(cls, sigmas, varsigma=DEFAULT_VARSIGMA, strict=False):
        sigmas = np.asarray(sigmas, dtype=float).ravel()
        if sigmas.size and np.any(sigmas <= 0):
            raise NonPositiveEigenvalue(f"spectrum must be positive, got min {sigmas.min()}")
        if strict and np.any(np.diff(sigmas) > 0):
            raise UnsortedInputRejected("sigmas must be non-increasing in strict mode")
        return cls(sigmas, np.ones(sigmas.size, dtype=np.int64), varsigma)

    @classmethod
    def from_atoms(cls, atoms, varsigma=DEFAULT_VARSIGMA):
        """``atoms`` is an iterable of ``(value, multiplicity)`` pairs."""
        atoms = list(atoms)
        if not atoms:
            raise DimensionMismatch("no atoms given")
        values, mults = zip(*atoms)
        return cls(np.array(values, dtype=float), np.array(mults), varsigma)

    @property
    def p(self) -> int:
        return int(self.mults.sum())

    @property
    def weights(self) -> np.ndarray:
        """Atom masses of the empirical spectral distribution."""
        return self.mults / self.mults.sum()

    def sigmas(self) -> np.ndarray:
        return np.repeat(self.values, self.mults)

    def top(self, r: int) -> np.ndarray:
        """The r largest eigenvalues, without expanding the whole spectrum."""
        out = []
        for v, k in zip(self.values, self.mults):
            take = min(int(k), r - len(out))
            out.extend([v] * take)
            if len(out) == r:
                break
        return np.array(out, dtype=float)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.values)

    def __eq__(self, other):
        if not isinstance(other, PopulationSpectrum):
            return NotImplemented
        return (np.array_equal(self.values, other.values)
                and np.array_equal(self.mults, other.mults)
                and self.varsigma == other.varsigma)

    __hash__ = None


@dataclass(frozen=True)
class SpikeSet:
    ds: tuple = ()
    varpi: float = DEFAULT_VARPI

    def __post_init__(self):
        ds = tuple(float(d) for d in self.ds)
        if any(not np.isfinite(d) or d <= 0 for d in ds):
            raise NonPositiveEigenvalue("spike strengths must be finite and positive")
        if len(ds) > MAX_SPIKES:
            raise DimensionMismatch(f"at most {MAX_SPIKES} spikes supported, got {len(ds)}")
        if not 0 < self.varpi < 1:
            raise ValueError(f"varpi must lie in (0, 1), got {self.varpi}")
        object.__setattr__(self, "ds", ds)

    @property
    def r(self) -> int:
        return len(self.ds)


@dataclass(frozen=True)
class BasisPolicy:
    """Eigenbasis used in simulation: identity, or Haar-random with a seed."""

    kind: str = "identity"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "haar"):
            raise ValueError(f"unknown basis policy {self.kind!r}")
        if self.kind == "haar" and self.seed is None:
            raise ValueError("haar basis needs a seed")


IDENTITY = BasisPolicy()


@dataclass(frozen=True)
class SpikedModel:
    dims: Dimensions
    spectrum: PopulationSpectrum
    spikes: SpikeSet
    basis: BasisPolicy = IDENTITY
    tilde_sigmas: np.ndarray = field(default=None, compare=False)

    @property
    def n(self):
        return self.dims.n

    @property
    def p(self):
        return self.dims.p

    @property
    def phi(self):
        return self.dims.phi

    @property
    def r(self):
        return self.spikes.r

    def population_sigmas(self, spiked=True) -> np.ndarray:
        """Full length-p eigenvalue vector of the spiked (or non-spiked) covariance."""
        s = self.spectrum.sigmas()
        if spiked and self.r:
            s[: self.r] = self.tilde_sigmas
        return s

    def basis_matrix(self):
        """Orthogonal eigenbasis V, or None for the identity policy."""
        if self.basis.kind == "identity":
            return None
        return haar_orthogonal(self.p, self.basis.seed)


def haar_orthogonal(p, seed):
    if p > 2048:
        raise ValueError("haar basis is only supported for p <= 2048")
    g = stream(seed, _HAAR_STREAM).standard_normal((p, p))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def build_model(dims, spectrum, spikes, basis_policy=IDENTITY, strict=False):
    """Assemble a spiked model and derive the spiked eigenvalues.

    Spike strengths are sorted in descending order (stable) unless ``strict``
    is set, in which case unsorted input is rejected.
    """
    if spectrum.p != dims.p:
        raise DimensionMismatch(f"spectrum has {spectrum.p} eigenvalues, expected p={dims.p}")
    if spikes.r > dims.n:
        raise DimensionMismatch(f"r={spikes.r} exceeds n={dims.n}")
    ds = np.asarray(spikes.ds, dtype=float)
    if np.any(np.diff(ds) > 0):
        if strict:
            raise UnsortedInputRejected("spike strengths must be non-increasing in strict mode")
        order = np.argsort(-ds, kind="stable")
        spikes = SpikeSet(tuple(ds[order]), spikes.varpi)
        ds = ds[order]
    tilde = (1.0 + ds) * spectrum.top(spikes.r)
    tilde.setflags(write=False)
    return SpikedModel(dims, spectrum, spikes, basis_policy, tilde)


@dataclass(frozen=True)
class SpikeWindow:
    i: int
    sigma_tilde: float
    lower: float
    upper: float
    admissible: bool


@dataclass(frozen=True)
class ValidationReport:
    spikes: tuple
    separations: tuple   # (i, j, ok) for i < j, 1-based
    spectrum_lower_ok: bool
    spectrum_upper_ok: bool

    @property
    def ok(self) -> bool:
        return (self.spectrum_lower_ok and self.spectrum_upper_ok
                and all(s.admissible for s in self.spikes)
                and all(ok for _, _, ok in self.separations))


def spike_window(phi, c1, varpi):
    """Open interval of admissible spiked eigenvalues for a given law."""
    lower = -np.sqrt(phi) / (c1 + varpi) if c1 + varpi < 0 else np.inf
    return lower, np.sqrt(phi) / varpi


def validate_assumptions(model, law) -> ValidationReport:
    """Check spectrum bounds and the spike window/separation conditions.

    Violations are reported as flags; nothing is raised.
    """
    varpi = model.spikes.varpi
    lower, upper = spike_window(model.phi, law.c1, varpi)
    windows = tuple(
        SpikeWindow(i + 1, float(s), float(lower), float(upper), bool(lower < s < upper))
        for i, s in enumerate(model.tilde_sigmas)
    )
    gap = np.sqrt(model.phi) * varpi
    seps = tuple(
        (i + 1, j + 1, bool(abs(model.tilde_sigmas[i] - model.tilde_sigmas[j]) > gap))
        for i in range(model.r) for j in range(i + 1, model.r)
    )
    sp = model.spectrum
    return ValidationReport(
        windows, seps,
        spectrum_lower_ok=bool(sp.varsigma <= sp.values[-1]),
        spectrum_upper_ok=bool(sp.values[0] <= 1.0 / sp.varsigma),
    )


def model_from_document(doc, strict=False):
    """Build a model from the JSON model document (already parsed)."""
    dims = Dimensions(int(doc["n"]), int(doc["p"]))
    spec = doc["spectrum"]
    varsigma = doc.get("varsigma", DEFAULT_VARSIGMA)
    if "atoms" in spec:
        spectrum = PopulationSpectrum.from_atoms(
            ((a["value"], a["mult"]) for a in spec["atoms"]), varsigma)
    else:
        spectrum = PopulationSpectrum.from_sigmas(spec["sigmas"], varsigma, strict=strict)
    spikes = SpikeSet(tuple(doc.get("spikes", ())), doc.get("varpi", DEFAULT_VARPI))
    basis = doc.get("basis", "identity")
    policy = IDENTITY if basis == "identity" else BasisPolicy("haar", int(basis["haar"]))
    return build_model(dims, spectrum, spikes, policy, strict=strict)


def model_to_document(model):
    sp = model.spectrum
    basis = "identity" if model.basis.kind == "identity" else {"haar": model.basis.seed}
    return {
        "n": model.n,
        "p": model.p,
        "spectrum": {"atoms": [{"value": float(v), "mult": int(k)}
                               for v, k in zip(sp.values, sp.mults)]},
        "spikes": list(model.spikes.ds),
        "varpi": model.spikes.varpi,
        "varsigma": sp.varsigma,
        "basis": basis,
    }
