# %% [markdown]
# Convergence rates by Monte Carlo.
#
# Grow n with p = n^alpha, keep the atom fractions and the relative spike
# strength fixed, and fit log-log slopes of the median errors.

# %%
import time

from uhdspike import sweep_and_fit
from uhdspike.montecarlo import SweepTemplate

template = SweepTemplate(alpha=1.5, atoms=((2.0, 0.5), (1.0, 0.5)), d_ratios=(3.0,))
quantities = ("outlier_location", "alignment", "delocalization", "edge_sticking",
              "projection_sum", "explained_variance")

t0 = time.perf_counter()
res = sweep_and_fit(template, [32, 64, 128, 256], [100, 50, 25, 12], quantities, seed=11)
print(f"sweep took {time.perf_counter() - t0:.1f}s")

# %%
for n, p, q, med, q25, q75, reps in res.summary_rows(quantities):
    print(f"n={n:4d} p={p:5d} {q:<20s} median {med:.3e}  IQR [{q25:.2e}, {q75:.2e}]")

# %%
for q, fit in res.fits.items():
    kind = "within band" if fit.passed else "outside band"
    print(f"{q:<20s} slope {fit.slope:+.3f}  target {fit.target_exponent:+.3f} "
          f"+/- {fit.tolerance}  {kind}")
