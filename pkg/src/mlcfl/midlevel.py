"""Mid-level bag-of-words over a K-means motion-primitive codebook.

The dictionary is learned per channel from sub-frame low-level features
(Z-score normalized by the caller). Frames are encoded by hard-assigning
each sub-frame to its nearest codeword and counting occurrences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import Frame, Source, subframes
from .errors import DimensionError, TrainingDataError
from .lowlevel import (
    FeatureVector,
    NormalizerParams,
    Provenance,
    ecdf_matrix,
    fft_matrix,
    stat_matrix,
    zscore_apply_matrix,
    _param_hash,
)

SUBFRAME_FAMILIES = ("stat", "fft", "ecdf")


@dataclass(frozen=True)
class Codebook:
    """K motion-primitive centroids in sub-frame feature space."""

    centroids: np.ndarray  # (K, d)
    channel_scope: str = "per-channel"
    seed: int = 0
    inertia_trace: tuple[float, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        object.__setattr__(self, "centroids", c)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centroids must be a (K, d) matrix")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise ValueError("codebook contains duplicate centroids")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _sq_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (X * X).sum(axis=1)[:, None] + (centroids * centroids).sum(axis=1)[None, :]
    d -= 2.0 * (X @ centroids.T)
    np.maximum(d, 0.0, out=d)
    return d


def _kmeans_pp_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans_fit(samples, k: int, seed: int = 0, max_iter: int = 100,
               channel_scope: str = "per-channel") -> Codebook:
    """Lloyd's algorithm with k-means++ seeding; deterministic given seed.

    Empty clusters are re-seeded to the sample farthest from the empty
    centroid, which keeps K fixed and never increases the inertia.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a (n, d) matrix")
    n = X.shape[0]
    if k > n:
        raise TrainingDataError(f"K={k} exceeds the sample count {n}")
    if k < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seed(X, k, rng)

    trace: list[float] = []
    prev_assign = None
    for _ in range(max_iter):
        assign = np.argmin(_sq_distances(X, centroids), axis=1)
        empties = np.setdiff1d(np.arange(k), np.unique(assign))
        claimed: set[int] = set()
        while empties.size:
            for j in empties:
                dist = ((X - centroids[j]) ** 2).sum(axis=1)
                for idx in claimed:
                    dist[idx] = -1.0
                far = int(np.argmax(dist))
                centroids[j] = X[far]
                claimed.add(far)
            assign = np.argmin(_sq_distances(X, centroids), axis=1)
            empties = np.setdiff1d(np.arange(k), np.unique(assign))
        inertia = float(((X - centroids[assign]) ** 2).sum())
        trace.append(inertia)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        for j in range(k):
            members = X[assign == j]
            centroids[j] = members.mean(axis=0)
    return Codebook(centroids=centroids, channel_scope=channel_scope,
                    seed=seed, inertia_trace=tuple(trace))


def assign_batch(codebook: Codebook, X: np.ndarray) -> np.ndarray:
    """Nearest-codeword index for each row; ties go to the lowest index."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != codebook.dim:
        raise DimensionError(
            f"vector dimension {X.shape[1]} does not match codebook "
            f"dimension {codebook.dim}"
        )
    return np.argmin(_sq_distances(X, codebook.centroids), axis=1)


def assign(codebook: Codebook, v: np.ndarray) -> int:
    return int(assign_batch(codebook, np.asarray(v))[0])


# ---------------------------------------------------------------------------
# Sub-frame features and encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubframeParams:
    """Sub-frame cutting and per-channel low-level feature for encoding."""

    family: str = "fft"
    sub_window: int = 20
    sub_overlap: float = 0.5
    fft_coeffs: int = 10
    ecdf_points: int = 60

    def __post_init__(self):
        if self.family not in SUBFRAME_FAMILIES:
            raise ValueError(f"unknown sub-frame family {self.family!r}")

    def feature_dim(self) -> int:
        if self.family == "stat":
            return 4  # single channel: no correlation terms
        if self.family == "fft":
            return min(self.fft_coeffs, self.sub_window // 2)
        return self.ecdf_points


def subframe_vectors(frame: Frame, channel: int, params: SubframeParams) -> np.ndarray:
    """Feature matrix (n_subframes, d) for one channel of one frame."""
    subs = subframes(frame, params.sub_window, params.sub_overlap)
    rows = np.empty((len(subs), params.feature_dim()))
    for i, sub in enumerate(subs):
        x = sub.samples[channel:channel + 1]
        if params.family == "stat":
            rows[i] = stat_matrix(x)
        elif params.family == "fft":
            rows[i] = fft_matrix(x, min(params.fft_coeffs, params.sub_window // 2))
        else:
            rows[i] = ecdf_matrix(x, params.ecdf_points)
    return rows


@dataclass(frozen=True)
class BowHistogram:
    """Concatenated per-channel codeword counts for one frame."""

    counts: np.ndarray  # (dict_k * n_channels,) int64
    dict_k: int
    n_channels: int
    n_subframes: int
    source: Source | None = None

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        if c.shape != (self.dict_k * self.n_channels,):
            raise ValueError("counts length must equal dict_k * n_channels")
        if np.any(c < 0):
            raise ValueError("histogram counts must be non-negative")
        for ch in range(self.n_channels):
            block = c[ch * self.dict_k:(ch + 1) * self.dict_k]
            if block.sum() != self.n_subframes:
                raise ValueError(
                    "per-channel counts must sum to the sub-frame count"
                )

    @property
    def dim(self) -> int:
        return self.counts.shape[0]


def bow_encode(codebooks: Sequence[Codebook], frame: Frame, params: SubframeParams,
               normalizers: Sequence[NormalizerParams] | None = None) -> BowHistogram:
    """Encode one frame: per channel, assign sub-frames and count codewords."""
    n_channels = frame.n_channels
    if len(codebooks) != n_channels:
        raise DimensionError(
            f"got {len(codebooks)} codebooks for {n_channels} channels"
        )
    dict_k = codebooks[0].k
    blocks = []
    n_subframes = 0
    for ch in range(n_channels):
        vectors = subframe_vectors(frame, ch, params)
        n_subframes = vectors.shape[0]
        if normalizers is not None:
            vectors = zscore_apply_matrix(normalizers[ch], vectors)
        idx = assign_batch(codebooks[ch], vectors)
        blocks.append(np.bincount(idx, minlength=codebooks[ch].k).astype(np.int64))
    return BowHistogram(
        counts=np.concatenate(blocks),
        dict_k=dict_k,
        n_channels=n_channels,
        n_subframes=n_subframes,
        source=frame.source,
    )


def bow_values(hist: BowHistogram, normalize: str = "counts") -> np.ndarray:
    """Histogram as a real vector; "l1" divides by the per-channel total."""
    values = hist.counts.astype(np.float64)
    if normalize == "l1":
        if hist.n_subframes > 0:
            values = values / float(hist.n_subframes)
    elif normalize != "counts":
        raise ValueError(f"unknown histogram normalization {normalize!r}")
    return values


def compl_concat(low: FeatureVector, mid: BowHistogram,
                 normalize: str = "counts") -> FeatureVector:
    """Low-level vector followed by the bag-of-words histogram."""
    if low.provenance.source != mid.source:
        raise ValueError(
            "low-level vector and histogram come from different frames: "
            f"{low.provenance.source} vs {mid.source}"
        )
    if mid.n_subframes == 0:
        raise ValueError("cannot concatenate an empty-frame histogram")
    values = np.concatenate([low.values, bow_values(mid, normalize)])
    return FeatureVector(
        values=values,
        level="compl",
        provenance=Provenance(
            extractor=f"compl({low.provenance.extractor})",
            params=_param_hash("compl", low.provenance.params, mid.dict_k, normalize),
            source=low.provenance.source,
        ),
    )
