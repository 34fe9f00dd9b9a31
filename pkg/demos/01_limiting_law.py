# %% [markdown]
# Limiting spectral law of the companion matrix when p >> n.
#
# Solve the self-consistent equation, read off the bulk edges, and compare the
# predicted density and quantiles with one simulated spectrum.

# %%
import numpy as np

from uhdspike import (
    Dimensions, PopulationSpectrum, SpikeSet, TrialSpec, build_model, density_curve,
    law_for_model, mp_law, quantiles, sample_matrix, spectral_decompose,
)
from uhdspike.cli import mp_check_rows

# %% Identity covariance first: the general solver against the closed forms
for phi in (2.0, 4.0, 9.0):
    worst = max(abs(got - want) for _, got, want in mp_check_rows(phi))
    ref = mp_law(phi)
    print(f"phi={phi}: edges [{ref.gamma_minus:.4f}, {ref.gamma_plus:.4f}], max deviation {worst:.1e}")

# %% A two-atom population spectrum
n, p = 200, 6000
spectrum = PopulationSpectrum.from_atoms([(3.0, 2000), (1.0, 4000)])
model = build_model(Dimensions(n, p), spectrum, SpikeSet(()))
law = law_for_model(model)
print(f"phi = {model.phi:.0f}, support [{law.gamma_minus:.4f}, {law.gamma_plus:.4f}], m1 = {law.m1:.4f}")

curve = density_curve(law, 400)
print(f"density mass on 400 edge-clustered nodes: {curve.mass:.12f}")

# %% One draw: eigenvalues against the quantiles gamma_i
X = sample_matrix(TrialSpec(model, seed=1))
eigs = spectral_decompose(model, X).eigs
gam = quantiles(law, n)
dev = np.abs(eigs - gam)
print(f"max |lambda_i - gamma_i| = {dev.max():.4f}, median = {np.median(dev):.4f}")
print(f"top eigenvalue {eigs[0]:.4f} vs edge {law.gamma_plus:.4f}")

# %% Histogram against the density, as text
bins = np.linspace(law.gamma_minus, law.gamma_plus, 13)
counts, _ = np.histogram(eigs, bins)
mids = 0.5 * (bins[1:] + bins[:-1])
pred = np.interp(mids, curve.grid, curve.values) * np.diff(bins) * n
for m, c, e in zip(mids, counts, pred):
    print(f"{m:8.3f}  {'#' * int(c):<40s} observed {c:3d}, predicted {e:5.1f}")
