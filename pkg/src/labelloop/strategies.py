"""Query strategies: uncertainty scores, batch selection, embedding k-means,
the softmax-regression proxy classifier, and the hybrid cold-start plan.

Conventions: natural log everywhere (base only rescales scores, ranking is
unaffected); ties in top-k selection break on ascending pool index; k-means
runs over rows canonicalized to ascending pool-index order so results are
invariant to input row permutation.
"""

from __future__ import annotations

import random
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import ConfigError, DomainError, PoolSizeError, ShapeError, ValidationError

PROB_TOL = 1e-9

STRATEGY_IDS = (
    "random",
    "least_confidence",
    "prediction_entropy",
    "margin",
    "bald",
    "embedding_kmeans",
    "active_llm",
    "hybrid_coldstart",
)

EMBEDDING_STRATEGIES = (
    "least_confidence",
    "prediction_entropy",
    "margin",
    "bald",
    "embedding_kmeans",
)


def _as_prob_vector(p) -> np.ndarray:
    vec = np.asarray(p, dtype=np.float64)
    if vec.ndim != 1 or vec.size < 1:
        raise ValidationError(f"expected a 1-D probability vector, got shape {vec.shape}")
    if np.any(vec < -PROB_TOL) or np.any(vec > 1 + PROB_TOL):
        raise ValidationError("probability entries must lie in [0, 1]")
    if abs(float(vec.sum()) - 1.0) > PROB_TOL:
        raise ValidationError(f"probability vector sums to {vec.sum()!r}, not 1")
    return np.clip(vec, 0.0, 1.0)


@dataclass
class ProbabilityMatrix:
    """Per-instance class-probability rows keyed by pool index."""

    rows: np.ndarray
    row_index_map: tuple[int, ...]

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ShapeError(f"probability matrix must be 2-D, got {self.rows.shape}")
        if len(self.row_index_map) != self.rows.shape[0]:
            raise ShapeError("row_index_map length does not match row count")
        sums = self.rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            raise ValidationError("probability rows must sum to 1")
        if np.any(self.rows < -PROB_TOL) or np.any(self.rows > 1 + PROB_TOL):
            raise ValidationError("probability entries must lie in [0, 1]")


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 * ln 0 := 0."""
    vec = np.asarray(p, dtype=np.float64)
    nonzero = vec[vec > 0]
    return float(-(nonzero * np.log(nonzero)).sum())


def score_least_confidence(p) -> float:
    """1 - max(p); higher means more uncertain."""
    vec = _as_prob_vector(p)
    return float(1.0 - vec.max())


def score_entropy(p) -> float:
    """Prediction entropy -sum p ln p; higher means more uncertain."""
    return entropy(_as_prob_vector(p))


def score_margin(p) -> float:
    """Top-1 minus top-2 probability; LOWER means more uncertain."""
    vec = _as_prob_vector(p)
    if vec.size < 2:
        raise DomainError("margin needs at least 2 classes")
    top = np.sort(vec)[::-1]
    return float(top[0] - top[1])


def score_bald(ensemble: Sequence) -> float:
    """Mutual information between label and model draw:
    H(mean_m p_m) - mean_m H(p_m)."""
    if len(ensemble) < 2:
        raise DomainError("BALD needs an ensemble of at least 2 members")
    members = np.stack([_as_prob_vector(p) for p in ensemble])
    mean = members.mean(axis=0)
    return float(entropy(mean) - np.mean([entropy(m) for m in members]))


def select_uncertainty(scores: Mapping[int, float], k: int,
                       order: str = "desc") -> list[int]:
    """Top-k indices by score, ties broken on ascending pool index."""
    if order not in ("desc", "asc"):
        raise ConfigError(f"order must be 'desc' or 'asc', got {order!r}")
    if k < 1:
        raise PoolSizeError("k must be positive")
    if k > len(scores):
        raise PoolSizeError(f"k={k} exceeds {len(scores)} scored instances")
    items = sorted(scores.items(), key=lambda kv: (kv[1], kv[0])) if order == "asc" \
        else sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [index for index, _ in items[:k]]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(closest_sq.sum())
        if total <= 0:
            # All remaining points coincide with a center; any point works.
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest_sq / total))
        centers[j] = points[pick]
        closest_sq = np.minimum(closest_sq, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(emb: EmbeddingMatrix, k: int, seed: int,
               max_iter: int = 300, tol: float = 1e-6):
    """Seeded k-means (k-means++ init, Lloyd iterations, Euclidean metric).

    Rows are canonicalized to ascending pool-index order first, so the fit is
    invariant to input row permutation. Empty clusters are re-seeded from the
    point farthest from its assigned center. Returns
    ``(centers, assignment, pool_indices)`` with ``assignment`` and
    ``pool_indices`` in canonical order.
    """
    if k < 1:
        raise PoolSizeError("k must be positive")
    if k > len(emb):
        raise PoolSizeError(f"k={k} exceeds {len(emb)} points")

    order = np.argsort(np.asarray(emb.row_index_map))
    points = emb.vectors[order]
    pool_indices = np.asarray(emb.row_index_map)[order]

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    for _ in range(max_iter):
        distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignment = distances.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = points[assignment == j]
            if len(members) == 0:
                # Re-seed from the point farthest from its assigned center.
                own = distances[np.arange(len(points)), assignment]
                new_centers[j] = points[int(own.argmax())]
            else:
                new_centers[j] = members.mean(axis=0)
        movement = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if movement < tol:
            break
    distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assignment = distances.argmin(axis=1)
    return centers, assignment, pool_indices


def select_kmeans(emb: EmbeddingMatrix, k: int, seed: int,
                  max_iter: int = 300, tol: float = 1e-6) -> list[int]:
    """Per converged cluster, the pool index nearest the centroid (ties to the
    lowest pool index); returns exactly k indices, sorted ascending."""
    centers, assignment, pool_indices = kmeans_fit(emb, k, seed, max_iter, tol)
    order = np.argsort(np.asarray(emb.row_index_map))
    points = emb.vectors[order]
    distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    selected: set[int] = set()
    for j in range(k):
        members = np.flatnonzero(assignment == j)
        if len(members) == 0:
            continue
        nearest = members[int(distances[members, j].argmin())]
        selected.add(int(pool_indices[nearest]))
    # Coincident centers can leave a cluster empty even after convergence
    # (duplicate points); pad with the lowest-index unchosen points so the
    # caller always receives exactly k.
    for idx in pool_indices:
        if len(selected) >= k:
            break
        selected.add(int(idx))
    return sorted(selected)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_loss_and_grads(weights: np.ndarray, bias: np.ndarray, X: np.ndarray,
                           Y: np.ndarray, l2: float):
    """Mean cross-entropy with L2 on weights (bias unregularized), plus its
    analytic gradients. Exposed so tests can check the gradients against
    central finite differences of the loss."""
    n = X.shape[0]
    probs = _softmax(X @ weights + bias)
    eps = 1e-12
    loss = float(-(Y * np.log(probs + eps)).sum() / n + 0.5 * l2 * (weights ** 2).sum())
    diff = (probs - Y) / n
    grad_w = X.T @ diff + l2 * weights
    grad_b = diff.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass
class ProxyClassifier:
    """Multinomial softmax regression over fixed embeddings."""

    weights: np.ndarray
    bias: np.ndarray
    classes: tuple[str, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return _softmax(X @ self.weights + self.bias)

    def predict(self, X: np.ndarray) -> list[str]:
        probs = self.predict_proba(X)
        return [self.classes[i] for i in probs.argmax(axis=1)]


def fit_proxy_classifier(X, labels: Sequence[str],
                         classes: Sequence[str] | None = None,
                         l2: float = 1e-3, epochs: int = 300, lr: float = 0.5,
                         seed: int = 0) -> ProxyClassifier:
    """Fit by seeded full-batch gradient descent.

    ``X`` is an (n, d) array or an :class:`EmbeddingMatrix` whose rows line up
    with ``labels``. A single-class labeled set trains but warns: predictions
    collapse to that class.
    """
    if isinstance(X, EmbeddingMatrix):
        X = X.vectors
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ShapeError(f"X shape {X.shape} does not match {len(labels)} labels")
    if len(labels) < 1:
        raise ShapeError("need at least one labeled example")
    class_list = tuple(classes) if classes else tuple(sorted(set(labels)))
    class_pos = {c: i for i, c in enumerate(class_list)}
    for label in labels:
        if label not in class_pos:
            raise ValidationError(f"label {label!r} not in classes {class_list}")
    if len(set(labels)) < 2:
        warnings.warn(
            f"degenerate fit: single represented class {labels[0]!r}; "
            "predictions will collapse to it",
            stacklevel=2,
        )
    Y = np.zeros((len(labels), len(class_list)), dtype=np.float64)
    for row, label in enumerate(labels):
        Y[row, class_pos[label]] = 1.0

    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=(X.shape[1], len(class_list)))
    bias = np.zeros(len(class_list), dtype=np.float64)
    for _ in range(epochs):
        _, grad_w, grad_b = softmax_loss_and_grads(weights, bias, X, Y, l2)
        weights -= lr * grad_w
        bias -= lr * grad_b
    return ProxyClassifier(weights=weights, bias=bias, classes=class_list)


def fit_proxy_ensemble(X, labels: Sequence[str],
                       classes: Sequence[str] | None = None,
                       ensemble_size: int = 5, seed: int = 0,
                       **params) -> list[ProxyClassifier]:
    """Independently seeded fits for BALD-style disagreement."""
    if ensemble_size < 2:
        raise DomainError("ensemble_size must be >= 2")
    return [
        fit_proxy_classifier(X, labels, classes=classes, seed=seed + member, **params)
        for member in range(ensemble_size)
    ]


@dataclass(frozen=True)
class StrategySpec:
    """Identity plus parameters of a query strategy."""

    id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in STRATEGY_IDS:
            raise ConfigError(f"unknown strategy id {self.id!r}")
        if self.id == "hybrid_coldstart":
            for key in ("seed_budget", "main"):
                if key not in self.params:
                    raise ConfigError(f"hybrid_coldstart needs param {key!r}")
            # Validate the nested main spec eagerly.
            main = self.params["main"]
            if isinstance(main, Mapping):
                StrategySpec(main["id"], dict(main.get("params", {})))

    def to_dict(self) -> dict:
        return {"id": self.id, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "StrategySpec":
        return cls(id=raw["id"], params=dict(raw.get("params", {})))


def resolve_active_spec(spec: StrategySpec, labeled_count: int) -> StrategySpec:
    """For hybrid cold-start, pick the live strategy for this iteration:
    the LLM seeds until `seed_budget` labels exist, then the main strategy."""
    if spec.id != "hybrid_coldstart":
        return spec
    if labeled_count < int(spec.params["seed_budget"]):
        return StrategySpec("active_llm", dict(spec.params.get("seed_params", {})))
    main = spec.params["main"]
    if isinstance(main, StrategySpec):
        return main
    return StrategySpec.from_dict(main)


@dataclass(frozen=True)
class PlanStep:
    iteration: int
    k: int
    strategy_id: str


@dataclass(frozen=True)
class SessionPlan:
    """Precomputed iteration sizes and the live strategy for each one."""

    steps: tuple[PlanStep, ...]
    switch_at_label: int | None

    @property
    def total(self) -> int:
        return sum(step.k for step in self.steps)


def hybrid_coldstart_plan(seed_budget: int, main: StrategySpec, step: int,
                          budget: int) -> SessionPlan:
    """Iteration plan: LLM-seeded selection until ``seed_budget`` labels exist,
    then the conventional strategy in steps of ``step`` until ``budget``."""
    if step < 1:
        raise ConfigError("step must be positive")
    if not (0 <= seed_budget <= budget):
        raise ConfigError("need 0 <= seed_budget <= budget")
    steps: list[PlanStep] = []
    labeled = 0
    iteration = 1
    while labeled < budget:
        k = min(step, budget - labeled)
        strategy_id = "active_llm" if labeled < seed_budget else main.id
        steps.append(PlanStep(iteration=iteration, k=k, strategy_id=strategy_id))
        labeled += k
        iteration += 1
    switch = seed_budget if 0 < seed_budget < budget else None
    return SessionPlan(steps=tuple(steps), switch_at_label=switch)


def select_conventional(spec: StrategySpec, candidates: Sequence[int], k: int,
                        *, embeddings: EmbeddingMatrix | None = None,
                        labeled: Mapping[int, str] | None = None,
                        classes: Sequence[str] | None = None,
                        seed: int = 0,
                        proxy_params: Mapping | None = None) -> tuple[list[int], list[str]]:
    """Run one conventional (non-LLM) strategy over the candidate indices.

    Returns exactly ``k`` distinct candidate indices plus diagnostics notes.
    Uncertainty strategies fit the proxy classifier on the labeled set first;
    with fewer than two represented classes they cannot rank anything (the cold
    start problem) and fall back to a seeded random draw, noted in diagnostics.
    """
    candidates = [int(i) for i in candidates]
    if k < 1:
        raise PoolSizeError("k must be positive")
    if k > len(candidates):
        raise PoolSizeError(f"k={k} exceeds {len(candidates)} candidates")

    if spec.id == "random":
        return random.Random(seed).sample(candidates, k), []

    if spec.id == "embedding_kmeans":
        if embeddings is None:
            raise ConfigError("embedding_kmeans requires embeddings")
        sub = EmbeddingMatrix(
            vectors=embeddings.for_indices(candidates),
            row_index_map=tuple(candidates),
            source_tag=embeddings.source_tag,
        )
        return select_kmeans(sub, k, seed), []

    if spec.id in ("least_confidence", "prediction_entropy", "margin", "bald"):
        if embeddings is None:
            raise ConfigError(f"{spec.id} requires embeddings")
        labeled = labeled or {}
        if len(set(labeled.values())) < 2:
            picked = random.Random(seed).sample(candidates, k)
            return picked, ["cold-start-random-fallback"]
        labeled_indices = sorted(labeled)
        X_train = embeddings.for_indices(labeled_indices)
        y_train = [labeled[i] for i in labeled_indices]
        X_cand = embeddings.for_indices(candidates)
        params = dict(proxy_params or {})
        if spec.id == "bald":
            ensemble_size = int(spec.params.get("ensemble_size", 5))
            members = fit_proxy_ensemble(X_train, y_train, classes=classes,
                                         ensemble_size=ensemble_size, seed=seed,
                                         **params)
            member_probs = np.stack([m.predict_proba(X_cand) for m in members])
            scores = {
                index: score_bald(member_probs[:, row, :])
                for row, index in enumerate(candidates)
            }
            return select_uncertainty(scores, k, order="desc"), []
        model = fit_proxy_classifier(X_train, y_train, classes=classes, seed=seed,
                                     **params)
        probs = model.predict_proba(X_cand)
        if spec.id == "least_confidence":
            scores = {i: score_least_confidence(p) for i, p in zip(candidates, probs)}
            return select_uncertainty(scores, k, order="desc"), []
        if spec.id == "prediction_entropy":
            scores = {i: score_entropy(p) for i, p in zip(candidates, probs)}
            return select_uncertainty(scores, k, order="desc"), []
        scores = {i: score_margin(p) for i, p in zip(candidates, probs)}
        return select_uncertainty(scores, k, order="asc"), []

    raise ConfigError(f"strategy {spec.id!r} is not a conventional selector")
