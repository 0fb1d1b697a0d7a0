"""Low-level frame features: statistical values, FFT magnitudes, ECDF-PCA.

All extractors are pure functions of the frame samples and return finite
vectors of a fixed, declared dimension. Fitting (PCA, Z-score) happens on
training data only and yields immutable parameter objects.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import Frame, Source
from .errors import DimensionError, RankDeficiencyError, TrainingDataError

LEVELS = ("low", "mid", "compl", "mlcf")

_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Provenance:
    """Where a feature vector came from: extractor, parameter hash, frame."""

    extractor: str
    params: str
    source: Source | None = None


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    level: str
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError("feature values must be a 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite entries")
        if self.level not in LEVELS:
            raise ValueError(f"unknown feature level {self.level!r}")

    def __len__(self) -> int:
        return self.values.shape[0]


def _param_hash(*parts) -> str:
    text = "|".join(repr(p) for p in parts)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:10]


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        return np.asarray(vectors, dtype=np.float64)
    rows = [v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)
            for v in vectors]
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# Extractors
# ---------------------------------------------------------------------------

def spectral_entropy(x: np.ndarray) -> float:
    """Shannon entropy (base 2) of the normalized non-DC FFT magnitudes.

    A constant signal has no non-DC content; its entropy is defined as 0.
    """
    mags = np.abs(np.fft.rfft(x))[1:]
    total = mags.sum()
    if total <= 0.0:
        return 0.0
    p = mags / total
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation; defined as 0 when either channel is constant."""
    sa = a.std()
    sb = b.std()
    if sa <= 0.0 or sb <= 0.0:
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def stat_matrix(samples: np.ndarray) -> np.ndarray:
    """Per channel: mean, population std, energy, spectral entropy; then one
    Pearson correlation per unordered channel pair."""
    n_channels = samples.shape[0]
    parts = []
    for ch in range(n_channels):
        x = samples[ch]
        parts.extend([x.mean(), x.std(), (x * x).mean(), spectral_entropy(x)])
    for i in range(n_channels):
        for j in range(i + 1, n_channels):
            parts.append(_pearson(samples[i], samples[j]))
    return np.asarray(parts, dtype=np.float64)


def stat_dim(n_channels: int) -> int:
    return 4 * n_channels + n_channels * (n_channels - 1) // 2


def stat_features(frame: Frame) -> FeatureVector:
    if frame.window < 2:
        raise ValueError("stat features need at least 2 samples per channel")
    return FeatureVector(
        values=stat_matrix(frame.samples),
        level="low",
        provenance=Provenance("stat", _param_hash("stat"), frame.source),
    )


def fft_matrix(samples: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Magnitudes of FFT bins 1..n_coeffs per channel, scaled by 1/window."""
    window = samples.shape[1]
    if n_coeffs > window // 2:
        raise ValueError(f"n_coeffs must be <= window//2 = {window // 2}")
    spectrum = np.abs(np.fft.rfft(samples, axis=1)) / window
    return spectrum[:, 1:n_coeffs + 1].reshape(-1)


def fft_features(frame: Frame, n_coeffs: int = 10) -> FeatureVector:
    return FeatureVector(
        values=fft_matrix(frame.samples, n_coeffs),
        level="low",
        provenance=Provenance("fft", _param_hash("fft", n_coeffs), frame.source),
    )


def full_spectrum_magnitudes(samples: np.ndarray) -> np.ndarray:
    """All N bin magnitudes scaled by 1/N (test hook for the Parseval check)."""
    return np.abs(np.fft.fft(samples, axis=1)) / samples.shape[1]


def ecdf_matrix(samples: np.ndarray, n_points: int) -> np.ndarray:
    """Empirical quantile function per channel on the (i+0.5)/n grid.

    Quantiles come from linear interpolation between order statistics
    (position p * (n - 1) over the sorted values).
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    n = samples.shape[1]
    probs = (np.arange(n_points) + 0.5) / n_points
    positions = probs * (n - 1)
    out = np.empty((samples.shape[0], n_points))
    grid = np.arange(n, dtype=np.float64)
    for ch in range(samples.shape[0]):
        out[ch] = np.interp(positions, grid, np.sort(samples[ch]))
    return out.reshape(-1)


def ecdf_feature(frame: Frame, n_points: int = 60) -> FeatureVector:
    return FeatureVector(
        values=ecdf_matrix(frame.samples, n_points),
        level="low",
        provenance=Provenance("ecdf", _param_hash("ecdf", n_points), frame.source),
    )


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EcdfPcaParams:
    """PCA basis over (typically ECDF) feature vectors.

    ``basis`` rows are orthonormal components ordered by descending
    eigenvalue; the largest-magnitude entry of each component is positive.
    """

    n_components: int
    basis: np.ndarray       # (n_components, dim)
    center: np.ndarray      # (dim,)
    eigenvalues: np.ndarray  # (n_components,)
    n_points: int | None = None

    @property
    def input_dim(self) -> int:
        return self.center.shape[0]


def pca_fit(vectors, n_components: int, n_points: int | None = None) -> EcdfPcaParams:
    """Top principal components of the sample covariance (descending order)."""
    X = _as_matrix(vectors)
    n, dim = X.shape
    if n < n_components + 1:
        raise TrainingDataError(
            f"PCA with {n_components} components needs at least "
            f"{n_components + 1} training vectors, got {n}"
        )
    if n_components < 1 or n_components > dim:
        raise ValueError("n_components must be in 1..input dimension")
    center = X.mean(axis=0)
    centered = X - center
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    scale = max(float(eigvals[0]), 0.0)
    rank = int(np.sum(eigvals > max(scale * 1e-10, 1e-12)))
    if rank < n_components:
        raise RankDeficiencyError(requested=n_components, achievable=rank)
    basis = eigvecs[:, :n_components].T.copy()
    for row in basis:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return EcdfPcaParams(
        n_components=n_components,
        basis=basis,
        center=center,
        eigenvalues=eigvals[:n_components].copy(),
        n_points=n_points,
    )


def pca_transform_matrix(params: EcdfPcaParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != params.input_dim:
        raise DimensionError(
            f"vector dimension {X.shape[-1]} does not match PCA input "
            f"dimension {params.input_dim}"
        )
    return (X - params.center) @ params.basis.T


def pca_transform(params: EcdfPcaParams, v: FeatureVector) -> FeatureVector:
    values = pca_transform_matrix(params, v.values)
    prov = v.provenance
    return FeatureVector(
        values=values,
        level=v.level,
        provenance=Provenance(prov.extractor + "+pca", prov.params, prov.source),
    )


# ---------------------------------------------------------------------------
# Z-score normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizerParams:
    """Per-dimension mean / std fit on training vectors; std floored at 1e-8."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be matching 1-D vectors")
        if np.any(self.std < _STD_FLOOR):
            raise ValueError("stored std values must respect the floor")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def zscore_fit(vectors) -> NormalizerParams:
    X = _as_matrix(vectors)
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), _STD_FLOOR)
    return NormalizerParams(mean=mean, std=std)


def zscore_apply_matrix(params: NormalizerParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != params.dim:
        raise DimensionError(
            f"vector dimension {X.shape[-1]} does not match normalizer "
            f"dimension {params.dim}"
        )
    return (X - params.mean) / params.std


def zscore_apply(params: NormalizerParams, v: FeatureVector) -> FeatureVector:
    prov = v.provenance
    return FeatureVector(
        values=zscore_apply_matrix(params, v.values),
        level=v.level,
        provenance=Provenance(prov.extractor + "+z", prov.params, prov.source),
    )
