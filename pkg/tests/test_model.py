import json

import numpy as np
import pytest

from fairmars.basis import INTERCEPT, MINUS, PLUS, BasisFunction, HingeTerm, design_matrix
from fairmars.dataset import Dataset
from fairmars.errors import InputError, ModelFormatError
from fairmars.fairness import disparity
from fairmars.forward import ForwardConfig
from fairmars.least_squares import build_system, solve
from fairmars.model import (FORMAT_VERSION, FairMarsModel, dumps, export_rules, fit,
                            fit_faircoef, load, loads, predict, save)

from conftest import random_dataset


def _model(bases, coef, mean=0.0, names=("x0",)):
    return FairMarsModel(tuple(bases), np.array(coef, float), mean, {}, names)


def test_intercept_only_predicts_mean():
    m = _model([INTERCEPT], [0.0], mean=0.5)
    np.testing.assert_array_equal(m.predict(np.zeros((4, 1))), 0.5)


def test_hinge_arithmetic():
    m = _model([INTERCEPT, BasisFunction((HingeTerm(0, 1.0, PLUS),), 1)], [0.0, 2.0])
    assert predict(m, np.array([3.0])) == 4.0


def test_dimension_mismatch():
    m = _model([INTERCEPT], [0.0])
    with pytest.raises(InputError):
        m.predict(np.zeros((3, 2)))


def test_model_invariants():
    with pytest.raises(ValueError):
        _model([INTERCEPT], [0.0, 1.0])
    with pytest.raises(ValueError):
        _model([BasisFunction((HingeTerm(0, 1.0),), 1)], [1.0])
    m = _model([INTERCEPT], [0.0])
    with pytest.raises(ValueError):
        m.coefficients[0] = 1.0


@pytest.mark.parametrize("seed", range(5))
def test_training_residuals_reproduce_lof(seed):
    ds = random_dataset(seed, n=80)
    res = fit(ds, ForwardConfig(penalty=0.3))
    r = ds.raw_response - res.model.predict(ds.features)
    assert float(r @ r) == pytest.approx(res.trace.best.lof, rel=1e-8)


def test_faircoef_single_group_is_ols():
    ds = random_dataset(1, n=60, n_groups=1)
    res = fit(ds, ForwardConfig())
    B = design_matrix(ds.features, res.model.bases)
    ref = solve(build_system(B, ds.response), on_singular="drop")
    np.testing.assert_allclose(fit_faircoef(res.model.bases, ds), ref, rtol=1e-10, atol=1e-12)


def test_faircoef_balanced_is_ols():
    ds = random_dataset(2, n=60)
    g = np.arange(60) % 2
    ds = Dataset.from_arrays(ds.features, ds.raw_response, g)
    res = fit(ds, ForwardConfig())
    B = design_matrix(ds.features, res.model.bases)
    ref = solve(build_system(B, ds.response), on_singular="drop")
    np.testing.assert_allclose(fit_faircoef(res.model.bases, ds), ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_faircoef_helps_minority(seed):
    rng = np.random.default_rng(seed)
    n = 200
    g = (rng.uniform(size=n) < 0.15).astype(int)
    x = rng.uniform(size=n)
    y = 2 * x + 0.6 * g + rng.normal(0, 0.1, n)
    ds = Dataset.from_arrays(x[:, None], y, g)
    bases = [INTERCEPT, BasisFunction((HingeTerm(0, 0.5, PLUS),), 1),
             BasisFunction((HingeTerm(0, 0.5, MINUS),), 2)]
    B = design_matrix(ds.features, bases)
    ols = solve(build_system(B, ds.response))
    wls = fit_faircoef(bases, ds)
    mse_ols = disparity(ds.response - B @ ols, g).group_mse[1]
    mse_wls = disparity(ds.response - B @ wls, g).group_mse[1]
    assert mse_wls < mse_ols


def test_faircoef_keeps_structure():
    ds = random_dataset(3, n=80)
    a = fit(ds, ForwardConfig(penalty=0.4)).model
    b = fit(ds, ForwardConfig(penalty=0.4), faircoef=True).model
    assert a.structure() == b.structure()
    assert not np.array_equal(a.coefficients, b.coefficients)


def test_export_rules_format():
    assert export_rules(_model([INTERCEPT], [0.0], mean=0.5)) == "0.50  Intercept"
    b1 = BasisFunction((HingeTerm(0, 49.08, PLUS),), 1)
    b2 = BasisFunction((HingeTerm(0, 49.08, MINUS),), 2, 0)
    b3 = BasisFunction((HingeTerm(1, 3.0, PLUS), HingeTerm(0, 49.08, PLUS)), 3, 1)
    m = FairMarsModel((INTERCEPT, b1, b3), np.array([1.0, -0.125, 12.0]), 0.0, {},
                      ("StdMath", "credits"), pruned=(b2,))
    assert export_rules(m, include_pruned=True).splitlines() == [
        "  1.00  Intercept",
        " -0.12  h(StdMath-49.08)",
        "pruned  h(49.08-StdMath)",
        " 12.00  h(credits-3)*h(StdMath-49.08)",
    ]
    assert "pruned" not in export_rules(m)


def test_save_load_exact(tmp_path):
    ds = random_dataset(4, n=80, d=3)
    model = fit(ds, ForwardConfig(penalty=0.2, max_degree=2)).model
    path = tmp_path / "m.json"
    save(model, path)
    back = load(path)
    X = np.random.default_rng(0).uniform(-1.5, 1.5, size=(1000, 3))
    np.testing.assert_array_equal(back.predict(X), model.predict(X))
    assert back.structure() == model.structure()
    assert dumps(back) == dumps(model)


def test_load_truncated(tmp_path):
    path = tmp_path / "m.json"
    save(fit(random_dataset(5), ForwardConfig(max_terms=5)).model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError, match="corrupted"):
        load(path)


def test_load_tampered(tmp_path):
    text = dumps(fit(random_dataset(6), ForwardConfig(max_terms=5)).model)
    doc = json.loads(text)
    doc["model"]["coefficients"][0] += 1.0
    with pytest.raises(ModelFormatError, match="checksum"):
        loads(json.dumps(doc))


def test_load_version_mismatch():
    doc = json.loads(dumps(fit(random_dataset(7), ForwardConfig(max_terms=5)).model))
    doc["version"] = FORMAT_VERSION + 1
    with pytest.raises(ModelFormatError) as info:
        loads(json.dumps(doc))
    assert str(FORMAT_VERSION + 1) in str(info.value) and str(FORMAT_VERSION) in str(info.value)


def test_continuity_at_knots():
    ds = random_dataset(8, n=80, d=2)
    model = fit(ds, ForwardConfig(max_degree=2)).model
    base = ds.features.mean(axis=0)
    for b in model.bases:
        for t in b.terms:
            lo, hi, at = base.copy(), base.copy(), base.copy()
            at[t.variable] = t.knot
            lo[t.variable] = t.knot - 1e-9
            hi[t.variable] = t.knot + 1e-9
            p = model.predict(at)
            assert abs(model.predict(lo) - p) < 1e-6
            assert abs(model.predict(hi) - p) < 1e-6


def test_provenance_and_config():
    ds = random_dataset(9)
    model = fit(ds, ForwardConfig(penalty=0.4), faircoef=True, seed=7).model
    assert model.provenance["dataset_sha256"] == ds.fingerprint()
    assert model.config["penalty"] == 0.4 and model.config["faircoef"] is True
    assert model.config["seed"] == 7
