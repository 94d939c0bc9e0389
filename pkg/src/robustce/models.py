"""Trained binary classifiers: linear models, decision trees, tree ensembles, ReLU nets.

Every model scores a point with ``h(x)`` and predicts class +1 iff
``h(x) >= tau``. Trees are stored leaf-wise: each leaf is the polyhedron cut
out by the split halfspaces on its root path.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np


class ModelIntegrityError(ValueError):
    """A model violates its structural invariants (e.g. a point lies in no leaf)."""


class InputError(ValueError):
    """Input point has the wrong shape."""


class VoteMode(str, Enum):
    AVERAGE = "average"
    MAJORITY = "majority"


def _vec(a) -> np.ndarray:
    out = np.array(a, dtype=float).reshape(-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FeatureSpace:
    lower: np.ndarray
    upper: np.ndarray
    immutable_mask: np.ndarray

    def __post_init__(self):
        lo, up = _vec(self.lower), _vec(self.upper)
        mask = np.array(self.immutable_mask, dtype=bool).reshape(-1)
        mask.setflags(write=False)
        if lo.shape != up.shape or mask.shape != lo.shape:
            raise ModelIntegrityError("feature space arrays must share one length")
        if np.any(lo > up):
            raise ModelIntegrityError("feature space needs lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "immutable_mask", mask)

    @classmethod
    def unit(cls, dim: int, immutable: Sequence[int] = ()) -> "FeatureSpace":
        mask = np.zeros(dim, dtype=bool)
        mask[list(immutable)] = True
        return cls(np.zeros(dim), np.ones(dim), mask)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def mutable(self) -> np.ndarray:
        return ~self.immutable_mask

    def with_immutable(self, indices: Sequence[int]) -> "FeatureSpace":
        mask = self.immutable_mask.copy()
        mask[list(indices)] = True
        return FeatureSpace(self.lower, self.upper, mask)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True)
class LinearModel:
    beta: np.ndarray
    beta0: float

    def __post_init__(self):
        beta = _vec(self.beta)
        if not np.all(np.isfinite(beta)) or not np.isfinite(self.beta0):
            raise ModelIntegrityError("linear model entries must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta0", float(self.beta0))

    @property
    def dim(self) -> int:
        return self.beta.size


@dataclass(frozen=True)
class Halfspace:
    """``a @ x <= b`` (or ``< b`` when ``strict``)."""

    a: np.ndarray
    b: float
    strict: bool = False

    def __post_init__(self):
        a = _vec(self.a)
        if not np.any(a):
            raise ModelIntegrityError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))


@dataclass(frozen=True)
class Leaf:
    constraints: tuple[Halfspace, ...]
    weight: float
    id: int

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not 0.0 <= self.weight <= 1.0:
            raise ModelIntegrityError(f"leaf {self.id} weight {self.weight} outside [0, 1]")

    def contains(self, X) -> np.ndarray:
        """Membership mask for the rows of ``X`` (or a single point)."""
        X = np.atleast_2d(X)
        ok = np.ones(X.shape[0], dtype=bool)
        # non-strict rows first: they own the boundary
        for hs in sorted(self.constraints, key=lambda h: h.strict):
            lhs = X @ hs.a
            ok &= (lhs < hs.b) if hs.strict else (lhs <= hs.b)
        return ok

    def slack(self, X) -> np.ndarray:
        """Minimum slack ``min (b - a @ x)`` over this leaf's halfspaces."""
        X = np.atleast_2d(X)
        if not self.constraints:
            return np.full(X.shape[0], np.inf)
        A = np.array([h.a for h in self.constraints])
        b = np.array([h.b for h in self.constraints])
        return np.min(b[None, :] - X @ A.T, axis=1)


@dataclass(frozen=True)
class DecisionTree:
    leaves: tuple[Leaf, ...]

    def __post_init__(self):
        object.__setattr__(self, "leaves", tuple(self.leaves))
        if not self.leaves:
            raise ModelIntegrityError("a tree needs at least one leaf")
        ids = [lf.id for lf in self.leaves]
        if len(set(ids)) != len(ids):
            raise ModelIntegrityError("leaf ids must be unique")
        if len(self.leaves) > 1 and any(not lf.constraints for lf in self.leaves):
            raise ModelIntegrityError("only a single-leaf tree may have an unconstrained leaf")

    @property
    def dim(self) -> int | None:
        for lf in self.leaves:
            for hs in lf.constraints:
                return hs.a.size
        return None

    def halfspaces(self):
        for lf in self.leaves:
            yield from lf.constraints

    def leaf_positions(self, X) -> np.ndarray:
        """Index (into ``leaves``) of the containing leaf for each row of ``X``."""
        X = np.atleast_2d(X)
        pos = np.full(X.shape[0], -1, dtype=int)
        for k, lf in enumerate(self.leaves):
            hit = (pos < 0) & lf.contains(X)
            pos[hit] = k
        if np.any(pos < 0):
            bad = X[np.flatnonzero(pos < 0)[0]]
            raise ModelIntegrityError(f"point {bad.tolist()} lies in no leaf")
        return pos

    def weights(self) -> np.ndarray:
        return np.array([lf.weight for lf in self.leaves])

    @classmethod
    def from_splits(cls, node, dim: int) -> "DecisionTree":
        """Build from nested splits.

        ``node`` is either a leaf weight (float) or a dict
        ``{"a": ..., "b": ..., "left": node, "right": node}`` where the left
        branch is ``a @ x <= b`` and the right branch ``a @ x > b``. An ``int``
        for ``"a"`` means an axis split on that feature.
        """
        leaves: list[Leaf] = []

        def walk(nd, path):
            if not isinstance(nd, dict):
                leaves.append(Leaf(tuple(path), float(nd), len(leaves)))
                return
            a = nd["a"]
            if isinstance(a, int):
                vec = np.zeros(dim)
                vec[a] = 1.0
                a = vec
            a = np.asarray(a, dtype=float)
            b = float(nd["b"])
            walk(nd["left"], path + [Halfspace(a, b, False)])
            walk(nd["right"], path + [Halfspace(-a, -b, True)])

        walk(node, [])
        return cls(tuple(leaves))


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple[DecisionTree, ...]
    vote_mode: VoteMode = VoteMode.AVERAGE

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "vote_mode", VoteMode(self.vote_mode))
        if not self.trees:
            raise ModelIntegrityError("an ensemble needs at least one tree")
        if self.vote_mode == VoteMode.MAJORITY:
            for t in self.trees:
                if any(lf.weight not in (0.0, 1.0) for lf in t.leaves):
                    raise ModelIntegrityError("majority vote needs 0/1 leaf weights")

    @property
    def dim(self) -> int | None:
        for t in self.trees:
            if t.dim is not None:
                return t.dim
        return None


@dataclass(frozen=True)
class ReluNetwork:
    """Affine layers; ReLU after every layer but the last, which has one output."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        W = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        b = tuple(np.array(v, dtype=float).reshape(-1) for v in self.biases)
        if not W or len(W) != len(b):
            raise ModelIntegrityError("network needs matching weight and bias lists")
        for k, (w, v) in enumerate(zip(W, b)):
            if w.shape[0] != v.size:
                raise ModelIntegrityError(f"layer {k}: bias length {v.size} != rows {w.shape[0]}")
            if k and w.shape[1] != W[k - 1].shape[0]:
                raise ModelIntegrityError(f"layer {k}: input width mismatch")
        if W[-1].shape[0] != 1:
            raise ModelIntegrityError("final layer must have a single output")
        for arr in W + b:
            arr.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    def forward(self, X, return_preactivations: bool = False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = X
        pre = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = v @ w.T + b
            if k < len(self.weights) - 1:
                pre.append(z)
                v = np.maximum(z, 0.0)
            else:
                v = z
        out = v[:, 0]
        return (out, pre) if return_preactivations else out


ModelParams = Union[LinearModel, DecisionTree, TreeEnsemble, ReluNetwork]

_KIND = {LinearModel: "linear", DecisionTree: "tree", TreeEnsemble: "ensemble", ReluNetwork: "relu"}


@dataclass(frozen=True)
class TrainedModel:
    params: ModelParams
    tau: float
    space: FeatureSpace
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau))
        dim = self.params.dim
        if dim is not None and dim != self.space.dim:
            raise ModelIntegrityError(f"model dimension {dim} != feature space {self.space.dim}")
        if self.kind in ("linear", "tree", "ensemble") and _is_probability_model(self.params):
            if not 0.0 <= self.tau <= 1.0:
                raise ModelIntegrityError("tau must lie in [0, 1] for probability-like scores")

    @property
    def kind(self) -> str:
        return _KIND[type(self.params)]

    @property
    def dim(self) -> int:
        return self.space.dim


def _is_probability_model(params) -> bool:
    return isinstance(params, (DecisionTree, TreeEnsemble))


def _check_point(model: TrainedModel, x, clamp: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.dim:
        raise InputError(f"expected a point of dimension {model.dim}, got shape {x.shape}")
    if clamp and not model.space.contains(x):
        warnings.warn("point outside the feature box; clamping", stacklevel=3)
        x = np.clip(x, model.space.lower, model.space.upper)
    return x


def scores(model: TrainedModel, X) -> np.ndarray:
    """Vectorised ``h`` over rows of ``X``; no box clamping."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise InputError(f"expected {model.dim} columns, got {X.shape[1]}")
    p = model.params
    if isinstance(p, LinearModel):
        return X @ p.beta + p.beta0
    if isinstance(p, DecisionTree):
        return p.weights()[p.leaf_positions(X)]
    if isinstance(p, TreeEnsemble):
        return np.mean([t.weights()[t.leaf_positions(X)] for t in p.trees], axis=0)
    return p.forward(X)


def predict_score(model: TrainedModel, x, clamp: bool = True) -> float:
    x = _check_point(model, x, clamp)
    return float(scores(model, x[None, :])[0])


def predict_class(model: TrainedModel, x, clamp: bool = True) -> int:
    return 1 if predict_score(model, x, clamp) >= model.tau else -1


def classes(model: TrainedModel, X) -> np.ndarray:
    return np.where(scores(model, X) >= model.tau, 1, -1)


def locate_leaf(tree: DecisionTree, x) -> Leaf:
    return tree.leaves[int(tree.leaf_positions(np.asarray(x, dtype=float)[None, :])[0])]


def surrogate_scores(tree: DecisionTree, tau: float, X) -> np.ndarray:
    """Lipschitz surrogate: ``tau`` on positive leaves, ``tau - min slack`` elsewhere."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pos = tree.leaf_positions(X)
    out = np.full(X.shape[0], float(tau))
    for k, lf in enumerate(tree.leaves):
        if lf.weight >= tau:
            continue
        rows = pos == k
        if rows.any():
            # a lone unconstrained leaf has no boundary to approach; keep its constant score
            out[rows] = tau - lf.slack(X[rows]) if lf.constraints else lf.weight
    return out


def surrogate_score(tree: DecisionTree, tau: float, x) -> float:
    return float(surrogate_scores(tree, tau, np.asarray(x, dtype=float)[None, :])[0])


def spectral_norm(W, rtol: float = 1e-9, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``W.T @ W``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not np.any(W):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = W @ v
        w = W.T @ u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the null space; restart orthogonally
            v = np.random.default_rng(seed + 1).standard_normal(W.shape[1])
            v /= np.linalg.norm(v)
            continue
        new = float(np.sqrt(nw))
        v = w / nw
        if abs(new - sigma) <= rtol * new:
            return new
        sigma = new
    return sigma


def tree_lipschitz(tree: DecisionTree) -> float:
    norms = [float(np.linalg.norm(h.a)) for h in tree.halfspaces()]
    return max(norms, default=0.0)


def lipschitz_bound(model: TrainedModel) -> float:
    """Upper bound on the Lipschitz constant of the model score in the l2 norm.

    Trees and ensembles are bounded through the surrogate score (largest
    split normal); networks by the product of layer spectral norms.
    """
    p = model.params
    if isinstance(p, LinearModel):
        return float(np.linalg.norm(p.beta))
    if isinstance(p, DecisionTree):
        return tree_lipschitz(p)
    if isinstance(p, TreeEnsemble):
        return max(tree_lipschitz(t) for t in p.trees)
    out = 1.0
    for w in p.weights:
        out *= spectral_norm(w)
    return out


def negate(model: TrainedModel) -> TrainedModel:
    """Mirror the score around ``tau`` so the two classes swap.

    ``2 tau - h`` for linear models and trees, sign flip of the output for
    networks. Points with ``h == tau`` stay class +1.
    """
    p, tau = model.params, model.tau
    if isinstance(p, LinearModel):
        params = LinearModel(-p.beta, 2 * tau - p.beta0)
        return TrainedModel(params, tau, model.space, dict(model.meta))
    if isinstance(p, ReluNetwork):
        W = list(p.weights)
        b = list(p.biases)
        W[-1], b[-1] = -W[-1], -b[-1]
        return TrainedModel(ReluNetwork(tuple(W), tuple(b)), -tau, model.space, dict(model.meta))

    def flip(tree):
        return DecisionTree(tuple(Leaf(lf.constraints, _mirror(lf.weight, tau), lf.id) for lf in tree.leaves))

    if isinstance(p, DecisionTree):
        params = flip(p)
    else:
        w = np.concatenate([t.weights() for t in p.trees])
        if np.any(2 * tau - w < 0) or np.any(2 * tau - w > 1):
            raise ModelIntegrityError("ensemble cannot be mirrored around tau inside [0, 1]")
        params = TreeEnsemble(tuple(flip(t) for t in p.trees), VoteMode.AVERAGE)
    return TrainedModel(params, tau, model.space, dict(model.meta))


def _mirror(weight: float, tau: float) -> float:
    # leaf weights live in [0, 1]; mirroring around tau may leave it, so clip
    return float(np.clip(2 * tau - weight, 0.0, 1.0))
