"""Max-margin Latent Pattern Learning.

For one action class, the training set is split into positives (that class)
and negatives (everything else). Each of K latent patterns gets a linear
model w_1..w_K and the negatives share w_0; training alternates between a
multi-class hinge-loss solve over all K+1 models and a latent-label update
that re-assigns each positive to its most confident pattern. The learned
models of every class and scale are stacked into one embedding: each output
coordinate is the confidence score w_k . x of one latent pattern.

The solver minimizes

    sum_k ||w_k||^2 + alpha * sum_i max(0, 1 + w_r.x_i - w_{z_i}.x_i)

with r the best rival label. It runs dual coordinate descent on the
equivalent Crammer-Singer dual (C = alpha/2), with an explicit monotonicity
safeguard: the reported iterate only moves along the segment toward the dual
iterate when that does not increase the primal objective, so the objective
trace is non-increasing by construction while still converging to the same
optimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, TrainingDataError
from .lowlevel import FeatureVector, Provenance
from .midlevel import assign_batch, kmeans_fit
from .util import stable_seed

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def _njit(**_kwargs):
        def wrap(fn):
            return fn
        return wrap


@dataclass(frozen=True)
class TrainConfig:
    """MLPL hyperparameters; defaults follow the standard setup."""

    alpha: float = 1.0
    n_iter: int = 3
    scales: tuple[int, ...] = (5, 10)
    seed: int = 0
    solver_tol: float = 1e-4
    solver_max_epochs: int = 1000
    negative_cap: int | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.scales or any(k < 1 for k in self.scales):
            raise ValueError("every latent scale must be >= 1")


@dataclass(frozen=True)
class ClassLatentModel:
    """K+1 linear latent models for one class at one scale.

    ``weights`` holds w_0..w_K as rows; row 0 is the shared negative model.
    ``assignment`` is the final latent index per positive training instance.
    """

    weights: np.ndarray  # (K+1, d)
    class_id: int
    latent_k: int
    assignment: np.ndarray | None = None
    objective_traces: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != self.latent_k + 1:
            raise ValueError("weights must have latent_k + 1 rows")
        if not np.all(np.isfinite(w)):
            raise ValueError("latent model weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class MlplModel:
    """All per-class latent models across scales.

    Embedding order is scale-major, then class id ascending, then latent
    column 0..K, matching the serialized model layout.
    """

    input_dim: int
    class_ids: tuple[int, ...]
    scales: tuple[int, ...]
    models: dict[tuple[int, int], ClassLatentModel]  # (scale, class_id) -> model

    @property
    def embedding_dim(self) -> int:
        return sum(len(self.class_ids) * (k + 1) for k in self.scales)

    def stacked_weights(self) -> np.ndarray:
        rows = [self.models[(scale, c)].weights
                for scale in self.scales for c in self.class_ids]
        return np.concatenate(rows, axis=0)

    def coordinate_names(self) -> list[str]:
        return [f"s{scale}.c{c}.w{k}"
                for scale in self.scales
                for c in self.class_ids
                for k in range(scale + 1)]


# ---------------------------------------------------------------------------
# Loss and objective
# ---------------------------------------------------------------------------

def hinge_loss(weights: np.ndarray, X: np.ndarray, z: np.ndarray) -> float:
    """Multi-class hinge: sum_i max(0, 1 + best-rival score - assigned score).

    Rival ties resolve to the lowest label index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    z = np.asarray(z, dtype=np.int64)
    if weights.shape[0] < 2:
        raise ValueError("hinge loss needs at least two label models")
    scores = X @ weights.T
    n = X.shape[0]
    rows = np.arange(n)
    assigned = scores[rows, z]
    masked = scores.copy()
    masked[rows, z] = -np.inf
    rival = masked.max(axis=1)
    return float(np.maximum(0.0, 1.0 + rival - assigned).sum())


def objective(weights: np.ndarray, X: np.ndarray, z: np.ndarray, alpha: float) -> float:
    """Squared-norm regularizer plus alpha-weighted multi-class hinge loss."""
    weights = np.asarray(weights, dtype=np.float64)
    return float((weights * weights).sum()) + alpha * hinge_loss(weights, X, z)


# ---------------------------------------------------------------------------
# Multi-class SVM solver
# ---------------------------------------------------------------------------

@dataclass
class DualState:
    """Dual variables and their weight image; reusable for warm starts."""

    alpha: np.ndarray    # (n, M)
    weights: np.ndarray  # (M, d)


@dataclass(frozen=True)
class SolverResult:
    weights: np.ndarray
    objective_trace: tuple[float, ...]
    n_epochs: int
    converged: bool


def _solve_subproblem(b: np.ndarray, a: float, cap: np.ndarray) -> np.ndarray:
    """Exact minimizer of (a/2)||v||^2 - b.v s.t. sum(v) = 0, v <= cap."""
    breakpoints = b - a * cap
    order = np.argsort(-breakpoints, kind="stable")
    b_sorted = b[order]
    bp_sorted = breakpoints[order]
    cap_sorted = cap[order]
    m = b.size
    suffix_b = np.cumsum(b_sorted[::-1])[::-1]
    prefix_cap = np.concatenate(([0.0], np.cumsum(cap_sorted)))
    beta = suffix_b[0] / m
    for j in range(m):
        cand = (suffix_b[j] + a * prefix_cap[j]) / (m - j)
        hi = bp_sorted[j - 1] if j > 0 else np.inf
        if bp_sorted[j] - 1e-12 <= cand <= hi + 1e-12:
            beta = cand
            break
    return np.minimum(cap, (b - beta) / a)


@_njit(cache=True)
def _dcd_epoch(X, sq, caps, e_cost, dual, w_dual, order):  # pragma: no cover
    """One in-place dual coordinate-descent pass; returns the exact decrease
    of the dual objective over the epoch."""
    n, d = X.shape
    m = w_dual.shape[0]
    g = np.empty(m)
    b = np.empty(m)
    bp = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    sufb = np.empty(m + 1)
    total_decrease = 0.0
    for oi in range(order.shape[0]):
        i = order[oi]
        a = sq[i]
        if a <= 0.0:
            continue
        for k in range(m):
            s = 0.0
            for j in range(d):
                s += w_dual[k, j] * X[i, j]
            g[k] = s + e_cost[i, k]
            b[k] = a * dual[i, k] - g[k]
            bp[k] = b[k] - a * caps[i, k]
        # stable insertion sort of indices by descending breakpoint
        for k in range(m):
            idx[k] = k
        for k in range(1, m):
            key = idx[k]
            kk = k - 1
            while kk >= 0 and bp[idx[kk]] < bp[key]:
                idx[kk + 1] = idx[kk]
                kk -= 1
            idx[kk + 1] = key
        sufb[m] = 0.0
        for k in range(m - 1, -1, -1):
            sufb[k] = sufb[k + 1] + b[idx[k]]
        beta = sufb[0] / m
        prefc = 0.0
        for j in range(m):
            cand = (sufb[j] + a * prefc) / (m - j)
            lo = bp[idx[j]]
            hi = bp[idx[j - 1]] if j > 0 else 1e300
            if lo - 1e-12 <= cand <= hi + 1e-12:
                beta = cand
                break
            prefc += caps[i, idx[j]]
        change = 0.0
        for k in range(m):
            vk = (b[k] - beta) / a
            ck = caps[i, k]
            if vk > ck:
                vk = ck
            delta = vk - dual[i, k]
            if delta != 0.0:
                change += 0.5 * a * delta * delta + g[k] * delta
                for j in range(d):
                    w_dual[k, j] += delta * X[i, j]
                dual[i, k] = vk
        total_decrease -= change
    return total_decrease


def solve_multiclass_svm(X: np.ndarray, z: np.ndarray, n_labels: int,
                         alpha: float = 1.0, seed: int = 0, tol: float = 1e-4,
                         max_epochs: int = 1000,
                         state: DualState | None = None,
                         w_start: np.ndarray | None = None
                         ) -> tuple[SolverResult, DualState]:
    """Minimize the multi-class max-margin objective with z fixed.

    Stops when the relative objective decrease between epochs falls below
    ``tol`` (or at ``max_epochs``). The reported objective trace is
    non-increasing; identical inputs and seed give identical results.
    ``state`` warm-starts the dual; ``w_start`` seeds the reported iterate
    (the result can only improve on it).
    """
    X = np.asarray(X, dtype=np.float64)
    z = np.asarray(z, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise TrainingDataError("non-finite feature values in solver input")
    n, d = X.shape
    if np.any(z < 0) or np.any(z >= n_labels):
        raise ValueError("labels must lie in 0..n_labels-1")
    if n_labels < 2:
        raise ValueError("need at least two labels")
    c_bound = alpha / 2.0

    if state is None:
        state = DualState(alpha=np.zeros((n, n_labels)),
                          weights=np.zeros((n_labels, d)))
    dual = state.alpha
    w_dual = state.weights
    sq = (X * X).sum(axis=1)
    caps = np.zeros((n, n_labels))
    caps[np.arange(n), z] = c_bound
    e_cost = np.ones((n, n_labels))
    e_cost[np.arange(n), z] = 0.0

    rng = np.random.default_rng(seed)
    w_rep = w_dual.copy() if w_start is None else np.asarray(w_start, dtype=np.float64).copy()
    obj = objective(w_rep, X, z, alpha)
    trace = [obj]
    converged = False
    dual_value = 0.5 * float((w_dual * w_dual).sum()) + float((e_cost * dual).sum())

    for _ in range(max_epochs):
        order = rng.permutation(n)
        if _HAVE_NUMBA:
            dual_decrease = float(_dcd_epoch(X, sq, caps, e_cost, dual, w_dual, order))
        else:
            dual_decrease = 0.0
            for i in order:
                if sq[i] <= 0.0:
                    continue
                grad = w_dual @ X[i] + e_cost[i]
                b = sq[i] * dual[i] - grad
                v = _solve_subproblem(b, sq[i], caps[i])
                delta = v - dual[i]
                active = delta != 0.0
                if active.any():
                    w_dual[active] += delta[active, None] * X[i]
                    dual[i] = v
                    # exact dual-objective change of the block update
                    dual_decrease -= 0.5 * sq[i] * float((delta * delta).sum()) \
                        + float(grad @ delta)

        # Monotone safeguard: move toward the dual iterate only as far as the
        # primal objective allows; at dual convergence the full step wins.
        prev = obj
        direction = w_dual - w_rep
        accepted = False
        for t in (1.0, 0.5, 0.25, 0.125):
            cand = w_dual if t == 1.0 else w_rep + t * direction
            cand_obj = objective(cand, X, z, alpha)
            if cand_obj <= prev:
                w_rep = cand.copy()
                obj = cand_obj
                accepted = True
                break
        trace.append(obj)
        dual_value -= dual_decrease
        # Stop once the reported objective decrease falls below tolerance on
        # an epoch with an accepted step AND the dual's own progress has
        # stalled; the dual only stalls at its optimum, so transient primal
        # plateaus do not end the solve early.
        if (accepted and prev - obj <= tol * max(abs(prev), 1.0)
                and dual_decrease <= tol * max(abs(dual_value), 1.0)):
            converged = True
            break

    result = SolverResult(weights=w_rep.copy(), objective_trace=tuple(trace),
                          n_epochs=len(trace) - 1, converged=converged)
    return result, state


# ---------------------------------------------------------------------------
# Per-class training and the full multi-scale model
# ---------------------------------------------------------------------------

def train_class(X_pos: np.ndarray, X_neg: np.ndarray, latent_k: int,
                config: TrainConfig, class_id: int = 0) -> ClassLatentModel:
    """Alternate hinge-loss solves with latent-label updates for one class.

    Positive latent labels start from K-means clusters over the positives;
    negatives stay at label 0 throughout. Latent labels that lose all their
    members keep their column (the regularizer shrinks it toward zero).
    """
    X_pos = np.asarray(X_pos, dtype=np.float64)
    X_neg = np.asarray(X_neg, dtype=np.float64)
    n_pos = X_pos.shape[0]
    if n_pos < latent_k:
        raise TrainingDataError(
            f"class {class_id}: {n_pos} positive instances support at most "
            f"K={n_pos} latent patterns; use a smaller scale than {latent_k}"
        )
    if X_neg.shape[0] < 1:
        raise TrainingDataError(f"class {class_id}: negative set is empty")

    codebook = kmeans_fit(X_pos, latent_k,
                          seed=stable_seed(config.seed, "mlpl-init", class_id, latent_k))
    z_pos = assign_batch(codebook, X_pos) + 1

    X = np.vstack([X_pos, X_neg])
    z = np.concatenate([z_pos, np.zeros(X_neg.shape[0], dtype=np.int64)])
    state: DualState | None = None
    traces = []
    weights = None
    for it in range(config.n_iter):
        result, state = solve_multiclass_svm(
            X, z, latent_k + 1, alpha=config.alpha,
            seed=stable_seed(config.seed, "mlpl-solve", class_id, latent_k, it),
            tol=config.solver_tol, max_epochs=config.solver_max_epochs,
            state=state, w_start=weights,
        )
        traces.append(result.objective_trace)
        weights = result.weights
        scores = X_pos @ weights.T
        new_z = 1 + np.argmax(scores[:, 1:] - scores[:, :1], axis=1)
        changed = np.flatnonzero(new_z != z_pos)
        z_pos = new_z
        z[:n_pos] = new_z
        if changed.size and it < config.n_iter - 1:
            # keep the dual state feasible under the new labels: clear the
            # dual rows of re-assigned instances and remove their weight
            # contribution from the dual image
            for i in changed:
                row = state.alpha[i]
                nz = row != 0.0
                if nz.any():
                    state.weights[nz] -= row[nz, None] * X[i]
                    row[:] = 0.0

    return ClassLatentModel(
        weights=weights,
        class_id=class_id,
        latent_k=latent_k,
        assignment=z_pos.copy(),
        objective_traces=tuple(traces),
    )


def _subsample_negatives(X_neg: np.ndarray, y_neg: np.ndarray, cap: int,
                         seed: int) -> np.ndarray:
    """Stratified negative subsampling: keep per-class shares, seeded."""
    if X_neg.shape[0] <= cap:
        return X_neg
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    classes = np.unique(y_neg)
    total = X_neg.shape[0]
    for c in classes:
        idx = np.flatnonzero(y_neg == c)
        quota = max(1, int(round(cap * idx.size / total)))
        chosen = rng.choice(idx, size=min(quota, idx.size), replace=False)
        keep.append(np.sort(chosen))
    return X_neg[np.concatenate(keep)]


def mlpl_fit(X: np.ndarray, y: np.ndarray, config: TrainConfig,
             class_ids: Sequence[int] | None = None) -> MlplModel:
    """Train one latent model per (scale, class) with one-vs-rest splits."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if class_ids is None:
        class_ids = sorted(int(c) for c in np.unique(y))
    else:
        class_ids = sorted(int(c) for c in class_ids)
    min_support = max(config.scales)
    for c in class_ids:
        support = int((y == c).sum())
        if support < min_support:
            raise TrainingDataError(
                f"class {c} has {support} training instances but the largest "
                f"latent scale needs {min_support}"
            )
    models: dict[tuple[int, int], ClassLatentModel] = {}
    for scale in config.scales:
        for c in class_ids:
            pos_mask = y == c
            X_pos = X[pos_mask]
            X_neg = X[~pos_mask]
            if config.negative_cap is not None:
                X_neg = _subsample_negatives(
                    X_neg, y[~pos_mask], config.negative_cap,
                    seed=stable_seed(config.seed, "neg-cap", scale, c),
                )
            models[(scale, c)] = train_class(X_pos, X_neg, scale, config, class_id=c)
    return MlplModel(input_dim=X.shape[1], class_ids=tuple(class_ids),
                     scales=tuple(config.scales), models=models)


def mlpl_transform_matrix(model: MlplModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise DimensionError(
            f"input dimension {X.shape[1]} does not match model dimension "
            f"{model.input_dim}"
        )
    return X @ model.stacked_weights().T


def mlpl_transform(model: MlplModel, x) -> FeatureVector:
    """Confidence-score embedding of one instance (scale-major order)."""
    if isinstance(x, FeatureVector):
        values = x.values
        source = x.provenance.source
    else:
        values = np.asarray(x, dtype=np.float64)
        source = None
    out = mlpl_transform_matrix(model, values)[0]
    return FeatureVector(
        values=out,
        level="mlcf",
        provenance=Provenance("mlcf", f"d{model.input_dim}", source),
    )
