# %% [markdown]
# Outlier eigenvalues and eigenvector alignment for spiked covariances.
#
# Below the critical spike strength the top eigenvalue sticks to the bulk edge;
# above it an outlier separates at a predictable location and its eigenvector
# keeps a predictable squared overlap with the spike direction.

# %%
import numpy as np

from uhdspike import (
    Dimensions, PopulationSpectrum, SpikeSet, TrialSpec, build_model, law_for_model,
    predict_outliers, sample_matrix, spectral_decompose,
)
from uhdspike.spikes import critical_sigma

n, p = 150, 4500
spectrum = PopulationSpectrum.from_atoms([(2.0, 1500), (1.0, 3000)])
base = build_model(Dimensions(n, p), spectrum, SpikeSet(()))
law = law_for_model(base)
d_crit = critical_sigma(law) / spectrum.values[0] - 1
print(f"bulk edge {law.gamma_plus:.4f}; outliers need d > {d_crit:.4f}")

# %% Sweep the spike strength through the transition
print(f"{'d':>8} {'a (pred)':>10} {'lambda_1':>10} {'b (pred)':>9} {'<u,v>^2':>9}")
for ratio in (0.5, 0.9, 1.2, 2.0, 4.0, 8.0):
    d = ratio * d_crit
    model = build_model(Dimensions(n, p), spectrum, SpikeSet((d,)))
    (o,) = predict_outliers(law, model)
    lam, ov = [], []
    for t in range(10):
        res = spectral_decompose(model, sample_matrix(TrialSpec(model, seed=2, trial_index=t)), [1])
        lam.append(res.eigs[0])
        ov.append(res.profiles[1][0])
    a = f"{o.a:10.4f}" if o.a is not None else f"{'edge':>10}"
    b = f"{o.b:9.4f}" if o.b is not None else f"{0.0:9.4f}"
    print(f"{d:8.3f} {a} {np.mean(lam):10.4f} {b} {np.mean(ov):9.4f}")
