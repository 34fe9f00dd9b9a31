import numpy as np
import pytest

from uhdspike import (
    Dimensions, PopulationSpectrum, SpikeSet, TrialSpec, build_model, fit_rate, law_for_model,
    make_predictions, run_trial, sample_matrix, spectral_decompose, sweep_and_fit,
)
from uhdspike.errors import InsufficientGrid
from uhdspike.model import BasisPolicy
from uhdspike.montecarlo import SweepTemplate, direct_decompose, interlacing_violations


def small_model(basis=BasisPolicy()):
    sp = PopulationSpectrum.from_atoms([(2.0, 60), (1.0, 60)])
    return build_model(Dimensions(12, 120), sp, SpikeSet((30.0, 10.0)), basis)


@pytest.mark.parametrize("dist", ["gaussian", "rademacher", "uniform"])
def test_entries_are_standardized(dist):
    sp = PopulationSpectrum.from_atoms([(1.0, 4000)])
    m = build_model(Dimensions(50, 4000), sp, SpikeSet(()))
    X = sample_matrix(TrialSpec(m, dist, seed=1))
    scaled = X * (m.p * m.n) ** 0.25
    assert abs(scaled.mean()) < 0.01
    assert scaled.var() == pytest.approx(1.0, abs=0.01)
    np.testing.assert_array_equal(X, sample_matrix(TrialSpec(m, dist, seed=1)))


@pytest.mark.parametrize("basis", [BasisPolicy(), BasisPolicy("haar", 11)])
def test_companion_matches_direct(basis):
    m = small_model(basis)
    X = sample_matrix(TrialSpec(m, seed=2, trial_index=5))
    fast = spectral_decompose(m, X, [1, 2, 3, 8], with_null=True)
    slow = direct_decompose(m, X, [1, 2, 3, 8])
    np.testing.assert_allclose(fast.eigs, slow.eigs, rtol=1e-10)
    for i in (1, 2, 3, 8):
        np.testing.assert_allclose(fast.profiles[i], slow.profiles[i], atol=1e-12)
        assert fast.residual_norms[i] < 1e-10 * fast.eigs[0]
        assert fast.profiles[i].sum() == pytest.approx(1.0)
    assert interlacing_violations(fast.eigs, fast.eigs0, m.r) == 0


def test_interlacing_detects_violation():
    e0 = np.array([5.0, 4.0, 3.0])
    assert interlacing_violations(np.array([6.0, 4.5, 3.5]), e0, 1) == 0
    assert interlacing_violations(np.array([6.0, 2.0, 1.0]), e0, 1) == 2


def test_trial_records_expected_keys():
    m = small_model()
    pred = make_predictions(m, law_for_model(m))
    rec = run_trial(TrialSpec(m, seed=3), pred)
    for k in ("outlier_location", "alignment", "explained_variance", "edge_sticking",
              "delocalization", "rigidity", "interlacing_violations"):
        assert k in rec.errors
    assert rec.errors["interlacing_violations"] == 0


def test_fit_rate_recovers_power_law():
    ns = [100, 200, 400, 800]
    fit = fit_rate("outlier_location", ns, [3.0 * n**-0.5 for n in ns], alpha=1.5)
    assert fit.slope == pytest.approx(-0.5) and fit.passed and fit.r2 == pytest.approx(1.0)
    bad = fit_rate("outlier_location", ns, [3.0 * n**-1.0 for n in ns], alpha=1.5)
    assert not bad.passed
    with pytest.raises(InsufficientGrid):
        fit_rate("outlier_location", ns[:2], [1.0, 0.5], alpha=1.5)


def test_template_multiplicities_sum_to_p():
    t = SweepTemplate(1.3, ((2.0, 1 / 3), (1.0, 2 / 3)), (3.0,))
    for n in (17, 40, 101):
        m = t.model_at(n)
        assert m.spectrum.p == m.p
        assert m.spikes.ds[0] == pytest.approx(3.0 * np.sqrt(m.phi))


def test_sweep_independent_of_threads():
    t = SweepTemplate(1.3, ((2.0, 0.5), (1.0, 0.5)), (3.0,))
    a = sweep_and_fit(t, [16, 24, 32], 4, ("outlier_location", "edge_sticking"), seed=9, threads=1)
    b = sweep_and_fit(t, [16, 24, 32], 4, ("outlier_location", "edge_sticking"), seed=9, threads=3)
    assert a.summary_rows(("outlier_location", "edge_sticking")) == \
        b.summary_rows(("outlier_location", "edge_sticking"))


@pytest.mark.parametrize("grid,reps", [([16, 32], 4), ([16, 16, 32], 4), ([16, 24, 32], 2)])
def test_sweep_rejects_bad_grids(grid, reps):
    t = SweepTemplate(1.3, ((1.0, 1.0),), (3.0,))
    with pytest.raises(InsufficientGrid):
        sweep_and_fit(t, grid, reps)
