import numpy as np
import pytest
from hypothesis import given, strategies as st

from wsexplore.errors import InfeasibleError, RankDeficientError, WSError
from wsexplore.layer_explorer import CurvePoint, SensitivityCurve
from wsexplore.predictor import PredictionModel, RegressionSample, ValidationStats, fit, predict, validate

REFERENCE_ALPHAS = [1.26, 0.78, 0.95, 0.80, 0.92]


def noiseless(alphas, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 5, size=(n, len(alphas)))
    return [RegressionSample(tuple(row), float(row @ alphas)) for row in x]


def flat_curves(als_per_layer):
    return [SensitivityCurve(i, [CurvePoint(k, al, 1.0, 0, 0.0) for k, al in enumerate(als, start=1)])
            for i, als in enumerate(als_per_layer)]


def test_recovers_reference_coefficients():
    model = fit(noiseless(np.array(REFERENCE_ALPHAS), 50, seed=0))
    assert np.allclose(model.alphas, REFERENCE_ALPHAS, atol=1e-6)
    assert model.intercept is None


def test_single_parameter_exact():
    model = fit([RegressionSample((2.0,), 1.0)])
    assert model.alphas.tolist() == [0.5]


def test_residual_is_locally_minimal():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 3))
    y = x @ [0.3, -1.2, 2.0] + rng.normal(scale=0.5, size=50)
    model = fit([RegressionSample(tuple(r), t) for r, t in zip(x, y)])

    def sse(a):
        return float(np.sum((y - x @ a) ** 2))

    base = sse(model.alphas)
    for i in range(3):
        for step in (1e-3, -1e-3):
            a = model.alphas.copy()
            a[i] += step
            assert sse(a) >= base


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_fit_generate_roundtrip(alphas, seed):
    alphas = np.array(alphas)
    model = fit(noiseless(alphas, 10 * len(alphas), seed))
    assert np.allclose(model.alphas, alphas, atol=1e-6)


@given(st.permutations(range(12)))
def test_fit_ignores_sample_order(perm):
    samples = noiseless(np.array([0.5, 1.5, -0.7]), 12, seed=2)
    rng = np.random.default_rng(3)
    samples = [RegressionSample(s.features, s.target + rng.normal()) for s in samples]
    a = fit(samples).alphas
    b = fit([samples[i] for i in perm]).alphas
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_canonical_basis_gives_ratios():
    samples = [RegressionSample((2.0, 0.0, 0.0), 3.0),
               RegressionSample((0.0, 4.0, 0.0), 1.0),
               RegressionSample((0.0, 0.0, 0.5), 2.0)]
    assert fit(samples).alphas.tolist() == [1.5, 0.25, 4.0]


def test_too_few_samples():
    with pytest.raises(InfeasibleError):
        fit(noiseless(np.ones(3), 2, seed=0))
    with pytest.raises(InfeasibleError):
        fit([])


def test_zero_column_is_named():
    samples = [RegressionSample((1.0, 0.0, 2.0), 1.0), RegressionSample((2.0, 0.0, 1.0), 2.0),
               RegressionSample((3.0, 0.0, 5.0), 0.0)]
    with pytest.raises(RankDeficientError) as err:
        fit(samples)
    assert err.value.columns == [1]


def test_collinear_columns_rejected():
    rng = np.random.default_rng(4)
    a = rng.normal(size=10)
    samples = [RegressionSample((v, 2 * v, w), 0.0) for v, w in zip(a, rng.normal(size=10))]
    with pytest.raises(RankDeficientError):
        fit(samples)


def test_ill_conditioned_still_solves():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(30, 2))
    x[:, 1] = x[:, 0] + 1e-7 * rng.normal(size=30)
    y = x @ [1.0, 2.0]
    model = fit([RegressionSample(tuple(r), t) for r, t in zip(x, y)])
    assert np.allclose(x @ model.alphas, y, atol=1e-6)


def test_optional_intercept_is_recorded():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(20, 2))
    y = x @ [1.0, -1.0] + 0.75
    model = fit([RegressionSample(tuple(r), t) for r, t in zip(x, y)], intercept=True, seed=3)
    assert model.intercept == pytest.approx(0.75)
    assert model.meta == {"seed": 3}


def test_predict_examples():
    curves = flat_curves([[0.1], [0.2], [0.1], [0.3], [0.2]])
    model = PredictionModel(np.array(REFERENCE_ALPHAS))
    assert predict((1, 1, 1, 1, 1), model, curves) == pytest.approx(0.801, abs=1e-12)
    zero = flat_curves([[0.0]] * 5)
    assert predict((1,) * 5, model, zero) == 0.0
    ones = PredictionModel(np.ones(3))
    curves = flat_curves([[0.4, 0.1], [0.7], [1.1, 0.0]])
    assert predict((1, 1, 2), ones, curves) == pytest.approx(1.1)


def test_predict_needs_swept_k():
    with pytest.raises(WSError):
        predict((2,), PredictionModel(np.ones(1)), flat_curves([[0.3]]))


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_prediction_is_linear(a, b):
    model = PredictionModel(np.array([0.3, 1.7, -0.4]))
    lhs = model.predict_features(a) + model.predict_features(b)
    rhs = model.predict_features(np.add(a, b))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_validate_examples():
    model = PredictionModel(np.array([2.0]))
    assert validate(model, [RegressionSample((1.0,), 2.0)]) == ValidationStats(0.0, 0.0, 0.0)
    stats = validate(model, [RegressionSample((1.0,), 2.5)])
    assert stats.mae == stats.rmse == stats.max_abs_error == 0.5
    with pytest.raises(WSError):
        validate(model, [])


def test_validate_matches_loop():
    rng = np.random.default_rng(7)
    model = PredictionModel(rng.normal(size=4))
    held = [RegressionSample(tuple(rng.normal(size=4)), float(rng.normal())) for _ in range(25)]
    errs = [abs(sum(a * f for a, f in zip(model.alphas, s.features)) - s.target) for s in held]
    stats = validate(model, held)
    assert stats.mae == pytest.approx(sum(errs) / len(errs))
    assert stats.rmse == pytest.approx((sum(e * e for e in errs) / len(errs)) ** 0.5)
    assert stats.max_abs_error == pytest.approx(max(errs))
