"""Reference models behind a black-box prediction contract."""

import json
import os

from .base import ConvergenceError, ModelError, Predictor, clamp_probability
from .gbdt import GbdtConfig, GbdtModel, train_gbdt
from .linear import CoxConfig, CoxModel, LogisticModel, train_cox, train_logistic

FORMAT_VERSION = 1
_KINDS = {"gbdt": GbdtModel, "cox": CoxModel, "logistic": LogisticModel}


def predict(model: Predictor, X):
    return model.predict(X)


def model_to_json(model: Predictor) -> str:
    doc = {"format_version": FORMAT_VERSION, **model.to_dict()}
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> Predictor:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {version!r}")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ModelError(f"unknown model kind {kind!r}")
    return _KINDS[kind].from_dict(doc)


def save_model(model: Predictor, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(model_to_json(model))
    os.replace(tmp, path)


def load_model(path) -> Predictor:
    with open(path) as fh:
        return model_from_json(fh.read())


__all__ = [
    "ConvergenceError", "CoxConfig", "CoxModel", "GbdtConfig", "GbdtModel", "LogisticModel",
    "ModelError", "Predictor", "clamp_probability", "load_model", "model_from_json",
    "model_to_json", "predict", "save_model", "train_cox", "train_gbdt", "train_logistic",
]
