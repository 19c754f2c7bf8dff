import json

import numpy as np
import pytest

from rbpca import (
    DataError,
    exact_kpca_baseline,
    fit_2d,
    fit_dynamic,
    fit_static,
    gen_numerical_example,
    load_model,
    mw_fit,
    save_model,
)
from rbpca.evaluation import make_monitor
from rbpca.persistence import dumps_model


@pytest.fixture(scope="module")
def X():
    return gen_numerical_example(300, seed=31).X


@pytest.fixture(scope="module")
def stream():
    rng = np.random.default_rng(0)
    return gen_numerical_example(100, seed=32).X + rng.normal(0, 0.3, size=(100, 3))


FITTERS = {
    "static": lambda X: fit_static(X, seed=1),
    "fourier": lambda X: fit_static(X, seed=1, feature="fourier"),
    "dynamic": lambda X: fit_dynamic(X, l=2, seed=1),
    "2d": lambda X: fit_2d(X, l=4, seed=1),
    "moving-window": lambda X: mw_fit(X, w=120, seed=1),
    "kpca": lambda X: exact_kpca_baseline(X, "scaled-dimension", 0.99),
}


@pytest.mark.parametrize("kind", FITTERS)
def test_round_trip_reproduces_scores(kind, X, stream, tmp_path):
    model = FITTERS[kind](X)
    path = save_model(model, tmp_path / "m.json", {"method": kind})
    loaded, config = load_model(path)
    assert config == {"method": kind}
    # the loaded copy is stepped first because a moving window mutates on every step
    b = [make_monitor(loaded).step(x) for x in stream]
    a = [make_monitor(model).step(x) for x in stream]
    np.testing.assert_array_equal([v.q for v in a], [v.q for v in b])
    assert [v.alarm for v in a] == [v.alarm for v in b]
    assert [v.updated for v in a] == [v.updated for v in b]


def test_payload_is_deterministic(X):
    assert dumps_model(fit_static(X, seed=2)) == dumps_model(fit_static(X, seed=2))


def test_version_checked(X, tmp_path):
    path = save_model(fit_static(X, seed=2), tmp_path / "m.json")
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["format"] == "rbpca-model"
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="version"):
        load_model(path)


def test_rejects_other_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{}")
    with pytest.raises(DataError):
        load_model(path)
    path.write_text("not json")
    with pytest.raises(DataError):
        load_model(path)
