# %% [markdown]
# Weighted projections of an outlier eigenvector onto the non-spiked directions.
#
# With weights l_j = sigma_j the sum over the bulk directions plus the spike
# term gives the variance explained by the sample eigenvector, u^T Sigma u.

# %%
import numpy as np

from uhdspike import (
    Dimensions, PopulationSpectrum, SpikeSet, TrialSpec, WeightSequence, build_model,
    explained_variance, law_for_model, predict_outliers, sample_matrix, spectral_decompose,
    weighted_projection_sum,
)

n, p = 200, 5000
spectrum = PopulationSpectrum.from_atoms([(2.0, 2500), (1.0, 2500)])
model = build_model(Dimensions(n, p), spectrum, SpikeSet((40.0,)))
law = law_for_model(model)
(o,) = predict_outliers(law, model)

ones = WeightSequence.ones(p)
sig = WeightSequence(spectrum.sigmas())
pred_ones = weighted_projection_sum(law, model, 1, ones)
pred_sig = weighted_projection_sum(law, model, 1, sig)
pred_ev = explained_variance(law, model, 1)
print(f"b = {o.b:.4f}; bulk mass (l=1) predicted {pred_ones:.4f} = 1 - b")

# %%
obs = {"ones": [], "sigma": [], "ev": []}
for t in range(20):
    res = spectral_decompose(model, sample_matrix(TrialSpec(model, seed=3, trial_index=t)), [1])
    prof = res.profiles[1]
    obs["ones"].append(prof[1:].sum())
    obs["sigma"].append(sig.ells[1:] @ prof[1:])
    obs["ev"].append(res.quadratic_forms[1])

print(f"sum_j>1 <u,v_j>^2        predicted {pred_ones:.4f}  observed {np.mean(obs['ones']):.4f}")
print(f"sum_j>1 sigma_j<u,v_j>^2 predicted {pred_sig:.4f}  observed {np.mean(obs['sigma']):.4f}")
print(f"u^T Sigma u              predicted {pred_ev:.4f}  observed {np.mean(obs['ev']):.4f}")
