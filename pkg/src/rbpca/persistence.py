"""Versioned JSON model files.

Floats are written with Python's shortest round-trip representation, so a
loaded model reproduces every stored number exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .dynamic import MovingWindowState, TwoDModel
from .evaluation import KernelPCADetector
from .exceptions import DataError
from .features import BernoulliFeatureMap, FourierFeatureMap
from .pca import Detector, PcaModel

FORMAT = "rbpca-model"
VERSION = 1


def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def _map_payload(fmap):
    if isinstance(fmap, BernoulliFeatureMap):
        return {"kind": "bernoulli", "D": fmap.D, "p": fmap.p, "c": fmap.c, "seed": fmap.seed,
                "indptr": fmap.indptr.tolist(), "indices": fmap.indices.tolist(),
                "u": _arr(fmap.u)}
    if isinstance(fmap, FourierFeatureMap):
        return {"kind": "fourier", "D": fmap.D, "c": fmap.c, "seed": fmap.seed,
                "W": _arr(fmap.W), "u": _arr(fmap.u)}
    raise DataError(f"cannot serialize feature map of type {type(fmap).__name__}")


def _map_from(d):
    if d["kind"] == "bernoulli":
        return BernoulliFeatureMap(D=d["D"], p=d["p"], c=d["c"],
                                   indptr=np.array(d["indptr"], dtype=np.int64),
                                   indices=np.array(d["indices"], dtype=np.int64),
                                   u=np.array(d["u"]), seed=d["seed"])
    if d["kind"] == "fourier":
        return FourierFeatureMap(D=d["D"], c=d["c"], W=np.array(d["W"]), u=np.array(d["u"]),
                                 seed=d["seed"])
    raise DataError(f"unknown feature map kind {d['kind']!r}")


def _detector_payload(det, with_features=False):
    return {"feature_map": _map_payload(det.feature_map),
            "feature_mean": _arr(det.pca.feature_mean),
            "eigenvalues": _arr(det.pca.eigenvalues),
            "components": _arr(det.pca.components),
            "n_components": det.n_components,
            "data_mean": _arr(det.data_mean), "data_std": _arr(det.data_std),
            "q_ucl": det.q_ucl, "alpha": det.alpha, "lag": det.lag,
            "train_q": _arr(det.train_q),
            "train_features": _arr(det.train_features) if with_features else None}


def _detector_from(d):
    fmap = _map_from(d["feature_map"])
    pca = PcaModel(np.array(d["feature_mean"]), np.array(d["eigenvalues"]),
                   np.array(d["components"]).reshape(fmap.m, d["n_components"]))
    feats = None if d["train_features"] is None else np.array(d["train_features"])
    return Detector(fmap, pca, np.array(d["data_mean"]), np.array(d["data_std"]), d["q_ucl"],
                    d["alpha"], feats, np.array(d["train_q"]), d["lag"])


def model_payload(model):
    """JSON-ready dictionary describing a fitted model."""
    if isinstance(model, Detector):
        return {"kind": "detector", **_detector_payload(model)}
    if isinstance(model, TwoDModel):
        return {"kind": "2d", "feature_map": _map_payload(model.feature_map),
                "data_mean": _arr(model.data_mean), "data_std": _arr(model.data_std),
                "lag": model.lag, "A_mean": _arr(model.A_mean), "G": _arr(model.G),
                "eigenvalues": _arr(model.eigenvalues), "P": _arr(model.P),
                "n_components": model.n_components,
                "q_ucl": model.q_ucl, "alpha": model.alpha, "train_q": _arr(model.train_q)}
    if isinstance(model, MovingWindowState):
        return {"kind": "moving-window", "window": _arr(model.window), "delta": model.delta,
                "delta_level": model.delta_level, "alpha": model.alpha,
                "n_components": model.n_components, "update_count": model.update_count,
                "detector": _detector_payload(model.detector, with_features=True)}
    if isinstance(model, KernelPCADetector):
        return {"kind": "kpca", "c": model.c, "alpha": model.alpha,
                "data_mean": _arr(model.data_mean), "data_std": _arr(model.data_std),
                "Xn": _arr(model.Xn), "k_colmean": _arr(model.k_colmean),
                "k_mean": model.k_mean, "eigenvalues": _arr(model.eigenvalues),
                "coef": _arr(model.coef), "n_components": model.n_components,
                "q_ucl": model.q_ucl, "train_q": _arr(model.train_q)}
    raise DataError(f"cannot serialize model of type {type(model).__name__}")


def model_from_payload(d):
    kind = d.get("kind")
    if kind == "detector":
        return _detector_from(d)
    if kind == "2d":
        fmap = _map_from(d["feature_map"])
        return TwoDModel(fmap, np.array(d["data_mean"]), np.array(d["data_std"]), d["lag"],
                         np.array(d["A_mean"]), np.array(d["G"]), np.array(d["eigenvalues"]),
                         np.array(d["P"]).reshape(fmap.m, d["n_components"]), d["q_ucl"],
                         d["alpha"], np.array(d["train_q"]))
    if kind == "moving-window":
        state = MovingWindowState.__new__(MovingWindowState)
        state.window = np.array(d["window"])
        state.w = state.window.shape[0]
        state.detector = _detector_from(d["detector"])
        state.feature_map = state.detector.feature_map
        state.alpha = d["alpha"]
        state.delta_level = d["delta_level"]
        state.delta = d["delta"]
        state.n_components = d["n_components"]
        state.update_count = d["update_count"]
        return state
    if kind == "kpca":
        det = KernelPCADetector.__new__(KernelPCADetector)
        det.c, det.alpha, det.k_mean, det.q_ucl = d["c"], d["alpha"], d["k_mean"], d["q_ucl"]
        for name in ("data_mean", "data_std", "Xn", "k_colmean", "eigenvalues", "train_q"):
            setattr(det, name, np.array(d[name]))
        det.coef = np.array(d["coef"]).reshape(det.Xn.shape[0], d["n_components"])
        det.lag = 0
        return det
    raise DataError(f"unknown model kind {kind!r}")


def dumps_model(model, config=None):
    doc = {"format": FORMAT, "version": VERSION,
           "config": dict(config or {}), "model": model_payload(model)}
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False)


def save_model(model, path, config=None):
    """Write ``model`` (and the run configuration that produced it) to ``path``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model, config))
        fh.write("\n")
    return path


def load_model(path):
    """Read a model file; returns ``(model, config_dict)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise DataError(f"{path} is not an rbpca model file")
    if doc.get("version") != VERSION:
        raise DataError(f"{path}: model file version {doc.get('version')!r} is not supported "
                        f"(expected {VERSION})")
    try:
        return model_from_payload(doc["model"]), doc.get("config", {})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed model payload ({exc})") from exc
