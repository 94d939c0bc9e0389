"""Versioned JSON model files."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .models import (
    DecisionTree,
    FeatureSpace,
    Halfspace,
    Leaf,
    LinearModel,
    ModelIntegrityError,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
)

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """A model document failed to parse or validate; ``field`` names the culprit."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def schema() -> dict:
    text = resources.files("robustce").joinpath("schema/model.schema.json").read_text()
    return json.loads(text)


def _path_str(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        # deepest error is the most specific
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ModelFileError(err.message, _path_str(err.absolute_path))


def _tree(doc: dict, where: str) -> DecisionTree:
    leaves = []
    for k, lf in enumerate(doc["leaves"]):
        cons = tuple(Halfspace(h["a"], h["b"], bool(h.get("strict", False))) for h in lf["constraints"])
        leaves.append(Leaf(cons, float(lf["weight"]), int(lf.get("id", k))))
    try:
        return DecisionTree(tuple(leaves))
    except ModelIntegrityError as exc:
        raise ModelFileError(str(exc), where) from exc


def model_from_dict(doc: dict) -> TrainedModel:
    validate(doc)
    sp = doc["space"]
    lower = np.asarray(sp["lower"], dtype=float)
    upper = np.asarray(sp["upper"], dtype=float)
    if lower.size != upper.size:
        raise ModelFileError("lower and upper differ in length", "space.upper")
    mask = np.zeros(lower.size, dtype=bool)
    for i in sp.get("immutable", []):
        if i >= lower.size:
            raise ModelFileError(f"index {i} out of range", "space.immutable")
        mask[i] = True
    try:
        space = FeatureSpace(lower, upper, mask)
    except ModelIntegrityError as exc:
        raise ModelFileError(str(exc), "space") from exc

    kind, p = doc["kind"], doc["params"]
    try:
        if kind == "linear":
            params = LinearModel(np.asarray(p["beta"], dtype=float), float(p["beta0"]))
        elif kind == "tree":
            params = _tree(p, "params.leaves")
        elif kind == "ensemble":
            trees = tuple(_tree(t, f"params.trees[{k}]") for k, t in enumerate(p["trees"]))
            params = TreeEnsemble(trees, p.get("vote_mode", "average"))
        else:
            params = ReluNetwork(tuple(np.asarray(L["weights"], dtype=float) for L in p["layers"]),
                                 tuple(np.asarray(L["bias"], dtype=float) for L in p["layers"]))
        dim = params.dim
        if dim is not None and dim != space.dim:
            raise ModelFileError(f"model dimension {dim} != space dimension {space.dim}", "params")
        meta = {k: doc[k] for k in ("name", "description", "factual") if k in doc}
        return TrainedModel(params, float(doc["tau"]), space, meta)
    except ModelIntegrityError as exc:
        raise ModelFileError(str(exc), "params") from exc


def _tree_doc(tree: DecisionTree) -> dict:
    return {"leaves": [{"id": lf.id, "weight": lf.weight,
                        "constraints": [{"a": h.a.tolist(), "b": h.b, "strict": h.strict}
                                        for h in lf.constraints]}
                       for lf in tree.leaves]}


def model_to_dict(model: TrainedModel) -> dict:
    p = model.params
    if isinstance(p, LinearModel):
        params = {"beta": p.beta.tolist(), "beta0": p.beta0}
    elif isinstance(p, DecisionTree):
        params = _tree_doc(p)
    elif isinstance(p, TreeEnsemble):
        params = {"vote_mode": p.vote_mode.value, "trees": [_tree_doc(t) for t in p.trees]}
    else:
        params = {"layers": [{"weights": w.tolist(), "bias": b.tolist()}
                             for w, b in zip(p.weights, p.biases)]}
    doc = {"version": FORMAT_VERSION, "kind": model.kind, "tau": model.tau,
           "space": {"lower": model.space.lower.tolist(), "upper": model.space.upper.tolist(),
                     "immutable": np.flatnonzero(model.space.immutable_mask).tolist()},
           "params": params}
    doc.update(model.meta)
    return doc


def load_model(path: str | Path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ModelFileError("top level must be an object")
    return model_from_dict(doc)


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. ``fixture_path("step_tree")``."""
    return Path(str(resources.files("robustce").joinpath(f"fixtures/{name}.json")))


def load_fixture(name: str) -> TrainedModel:
    return load_model(fixture_path(name))


def fixture_names() -> list[str]:
    root = resources.files("robustce").joinpath("fixtures")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
