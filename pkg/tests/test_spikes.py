import warnings

import numpy as np
import pytest

from uhdspike import (
    Dimensions, PopulationSpectrum, SpikeSet, WeightSequence, build_model, explained_variance,
    law_for_model, m_dot, quantiles, nonoutlier_targets, outlier_alignment, outlier_location,
    predict_outliers, weighted_projection_sum,
)
from uhdspike.errors import DimensionMismatch, InadmissibleSpike, WeightBoundViolation
from uhdspike.spikes import critical_sigma


def mp_model(ds, n=1000, phi=4):
    p = n * phi
    return build_model(Dimensions(n, p), PopulationSpectrum.from_atoms([(1.0, p)]), SpikeSet(ds))


def test_identity_spike_values():
    # sigma_tilde = 5, phi = 4: hand-derived from the closed forms
    m = mp_model((4.0,))
    law = law_for_model(m)
    assert outlier_location(law, m, 1) == pytest.approx(5.0, abs=1e-12)
    assert outlier_alignment(law, m, 1) == pytest.approx(0.375, abs=1e-12)
    ones = WeightSequence.ones(m.p)
    assert m_dot(law, m, 1, ones) == pytest.approx(4 / 15, rel=1e-10)
    assert weighted_projection_sum(law, m, 1, ones) == pytest.approx(0.625, abs=1e-12)
    assert explained_variance(law, m, 1) == pytest.approx(2.5, abs=1e-12)


def test_critical_value_and_subcritical_spike():
    m = mp_model((0.5, 3.0))
    law = law_for_model(m)
    assert critical_sigma(law) == pytest.approx(3.0)   # 1 + sqrt(phi)
    preds = predict_outliers(law, m)
    assert preds[0].a is not None and preds[0].a > law.gamma_plus
    assert preds[1].a is None and not preds[1].admissible
    with pytest.raises(InadmissibleSpike):
        outlier_location(law, m, 2)


def test_near_critical_warns():
    m = mp_model((2.0 + 1e-9,))
    law = law_for_model(m)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        (o,) = predict_outliers(law, m)
    assert o.near_critical and any("near critical" in str(x.message) for x in w)


def test_weight_checks():
    m = mp_model((4.0,), n=100)
    law = law_for_model(m)
    ells = np.ones(m.p)
    ells[0] = 2.0
    with pytest.raises(WeightBoundViolation):
        m_dot(law, m, 1, WeightSequence(ells))
    with pytest.raises(DimensionMismatch):
        m_dot(law, m, 1, WeightSequence.ones(m.p - 1))
    with pytest.raises(WeightBoundViolation):
        WeightSequence(np.full(5, 1e-6))


def test_explained_variance_splits_into_spike_and_bulk():
    sp = PopulationSpectrum.from_atoms([(2.0, 300), (1.0, 700)])
    m = build_model(Dimensions(100, 1000), sp, SpikeSet((20.0,)))
    law = law_for_model(m)
    (o,) = predict_outliers(law, m)
    bulk = weighted_projection_sum(law, m, 1, WeightSequence(sp.sigmas()))
    assert explained_variance(law, m, 1) == pytest.approx(o.sigma_tilde * o.b + bulk, rel=1e-12)


def test_nonoutlier_targets_follow_quantiles():
    m = mp_model((4.0, 3.5), n=50)
    law = law_for_model(m)
    t = nonoutlier_targets(law, m)
    assert [x.i for x in t] == list(range(3, 51))
    g = quantiles(law, 50)
    assert t[0].gamma == g[0] and t[-1].gamma == g[47]
    assert all(x.envelope > 0 for x in t)
