"""End-to-end pipeline configuration and the fitted feature stack.

``PipelineConfig`` bundles every stage's parameters (defaults: window 64 with
50% overlap, sub-frames of 20, 300 codewords per channel, ECDF on 60 points
with 30 principal components, latent scales {5, 10} with alpha 1 and 3
alternations, 5 nearest neighbors). ``FeatureStack`` owns everything that is
fitted on training data: the low-level normalizer and PCA, per-channel
sub-frame normalizers and codebooks, and the latent-pattern model.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from .classifiers import (
    KnnModel,
    LinearClassifier,
    NccModel,
    knn_fit,
    knn_predict_batch,
    knn_votes,
    linear_fit,
    linear_predict_batch,
    linear_scores,
    ncc_fit,
    ncc_predict_batch,
)
from .dataio import CsvSchema, Frame, SensorStream, frame_stream
from .errors import DimensionError, MlcflError, TrainingDataError
from .lowlevel import (
    EcdfPcaParams,
    NormalizerParams,
    ecdf_matrix,
    fft_matrix,
    pca_fit,
    pca_transform_matrix,
    stat_dim,
    stat_matrix,
    zscore_apply_matrix,
    zscore_fit,
)
from .midlevel import (
    Codebook,
    SubframeParams,
    assign_batch,
    bow_encode,
    bow_values,
    kmeans_fit,
    subframe_vectors,
)
from .mlpl import MlplModel, TrainConfig, mlpl_fit, mlpl_transform_matrix
from .util import stable_seed

FEATURE_LEVELS = ("low", "mid", "compl", "mlcf")
LOW_FAMILIES = ("stat", "fft", "ecdf-pca")
CLASSIFIER_KINDS = ("knn", "svm", "ncc")

def _from_dict(cls, d: dict, context: str):
    if not isinstance(d, dict):
        raise MlcflError(f"{context}: expected a mapping")
    names = {f.name for f in dc_fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise MlcflError(f"{context}: unknown keys {sorted(unknown)}")
    kwargs = dict(d)
    for f in dc_fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    return cls(**kwargs)


@dataclass(frozen=True)
class FramingConfig:
    window: int = 64
    overlap: float = 0.5
    label_policy: str = "single"


@dataclass(frozen=True)
class LowLevelConfig:
    family: str = "fft"
    fft_coeffs: int = 10
    ecdf_points: int = 60
    pca_components: int = 30
    normalize: bool = True

    def __post_init__(self):
        if self.family not in LOW_FAMILIES:
            raise MlcflError(f"unknown low-level family {self.family!r}")


@dataclass(frozen=True)
class MidLevelConfig:
    dict_k: int = 300
    sub_window: int = 20
    sub_overlap: float = 0.5
    subframe_family: str | None = None  # default: derived from the low family
    subframe_fft_coeffs: int = 10
    subframe_ecdf_points: int = 60
    scope: str = "per-channel"  # or "joint"
    normalize: str = "counts"   # or "l1"
    kmeans_max_iter: int = 100


@dataclass(frozen=True)
class MlplConfig:
    alpha: float = 1.0
    scales: tuple[int, ...] = (5, 10)
    n_iter: int = 3
    solver_tol: float = 1e-4
    solver_max_epochs: int = 1000
    negative_cap: int | None = None
    include_null_class: bool = True


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "knn"
    neighbor_k: int = 5
    svm_c: float = 1.0

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise MlcflError(f"unknown classifier kind {self.kind!r}")


@dataclass(frozen=True)
class SplitConfig:
    mode: str = "random-kfold"
    k: int = 4
    stratified: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    data: CsvSchema | None = None
    framing: FramingConfig = field(default_factory=FramingConfig)
    lowlevel: LowLevelConfig = field(default_factory=LowLevelConfig)
    midlevel: MidLevelConfig = field(default_factory=MidLevelConfig)
    mlpl: MlplConfig = field(default_factory=MlplConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    level: str = "mlcf"

    def __post_init__(self):
        if self.level not in FEATURE_LEVELS:
            raise MlcflError(f"unknown feature level {self.level!r}")

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {"seed", "data", "framing", "lowlevel", "midlevel", "mlpl",
                 "classifier", "split", "level"}
        unknown = set(d) - known
        if unknown:
            raise MlcflError(f"config: unknown keys {sorted(unknown)}")
        kwargs: dict = {}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        if "level" in d:
            kwargs["level"] = d["level"]
        if d.get("data") is not None:
            kwargs["data"] = CsvSchema.from_dict(d["data"])
        for key, cls in (("framing", FramingConfig), ("lowlevel", LowLevelConfig),
                         ("midlevel", MidLevelConfig), ("mlpl", MlplConfig),
                         ("classifier", ClassifierConfig), ("split", SplitConfig)):
            if key in d:
                kwargs[key] = _from_dict(cls, d[key], key)
        return PipelineConfig(**kwargs)

    def to_dict(self) -> dict:
        def section(obj):
            out = {}
            for f in dc_fields(obj):
                value = getattr(obj, f.name)
                out[f.name] = list(value) if isinstance(value, tuple) else value
            return out

        return {
            "seed": self.seed,
            "data": self.data.to_dict() if self.data is not None else None,
            "framing": section(self.framing),
            "lowlevel": section(self.lowlevel),
            "midlevel": section(self.midlevel),
            "mlpl": section(self.mlpl),
            "classifier": section(self.classifier),
            "split": section(self.split),
            "level": self.level,
        }


def subframe_params(config: PipelineConfig) -> SubframeParams:
    family = config.midlevel.subframe_family
    if family is None:
        family = {"stat": "stat", "fft": "fft", "ecdf-pca": "ecdf"}[config.lowlevel.family]
    return SubframeParams(
        family=family,
        sub_window=config.midlevel.sub_window,
        sub_overlap=config.midlevel.sub_overlap,
        fft_coeffs=config.midlevel.subframe_fft_coeffs,
        ecdf_points=config.midlevel.subframe_ecdf_points,
    )


def frames_from_streams(streams: list[SensorStream], config: PipelineConfig) -> list[Frame]:
    frames: list[Frame] = []
    for stream in streams:
        frames.extend(frame_stream(stream, config.framing.window,
                                   config.framing.overlap,
                                   config.framing.label_policy))
    return frames


def frame_labels(frames) -> np.ndarray:
    return np.asarray([f.label for f in frames], dtype=np.int64)


# ---------------------------------------------------------------------------
# Fitted feature stack
# ---------------------------------------------------------------------------

class FeatureStack:
    """Feature extractors fitted on training frames only."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.n_channels: int | None = None
        self.pca: EcdfPcaParams | None = None
        self.low_norm: NormalizerParams | None = None
        self.sub_norms: tuple[NormalizerParams, ...] | None = None
        self.codebooks: tuple[Codebook, ...] | None = None
        self.mlpl_model: MlplModel | None = None
        self.train_features: dict[str, np.ndarray] = {}

    # -- raw extractors ----------------------------------------------------
    def _low_raw(self, frames) -> np.ndarray:
        cfg = self.config.lowlevel
        if cfg.family == "stat":
            return np.stack([stat_matrix(f.samples) for f in frames])
        if cfg.family == "fft":
            return np.stack([fft_matrix(f.samples, cfg.fft_coeffs) for f in frames])
        return np.stack([ecdf_matrix(f.samples, cfg.ecdf_points) for f in frames])

    def _low(self, frames) -> np.ndarray:
        X = self._low_raw(frames)
        if self.pca is not None:
            X = pca_transform_matrix(self.pca, X)
        if self.low_norm is not None:
            X = zscore_apply_matrix(self.low_norm, X)
        return X

    def _mid(self, frames) -> np.ndarray:
        params = subframe_params(self.config)
        normalize = self.config.midlevel.normalize
        if self.config.midlevel.scope == "joint":
            rows = []
            book = self.codebooks[0]
            for frame in frames:
                counts = np.zeros(book.k, dtype=np.float64)
                total = 0
                for ch in range(frame.n_channels):
                    vectors = subframe_vectors(frame, ch, params)
                    vectors = zscore_apply_matrix(self.sub_norms[ch], vectors)
                    idx = assign_batch(book, vectors)
                    counts += np.bincount(idx, minlength=book.k)
                    total += vectors.shape[0]
                if normalize == "l1" and total:
                    counts = counts / total
                rows.append(counts)
            return np.stack(rows)
        rows = []
        for frame in frames:
            hist = bow_encode(self.codebooks, frame, params, self.sub_norms)
            rows.append(bow_values(hist, normalize))
        return np.stack(rows)

    def _features(self, frames, level: str) -> np.ndarray:
        if level == "low":
            return self._low(frames)
        if level == "mid":
            return self._mid(frames)
        if level == "compl":
            return np.hstack([self._low(frames), self._mid(frames)])
        if level == "mlcf":
            return mlpl_transform_matrix(self.mlpl_model, self._features(frames, "compl"))
        raise MlcflError(f"unknown feature level {level!r}")

    # -- fitting -----------------------------------------------------------
    def fit(self, frames, levels="mlcf") -> "FeatureStack":
        """Fit every component the requested level(s) depend on."""
        if not frames:
            raise TrainingDataError("cannot fit on an empty frame list")
        wanted = {levels} if isinstance(levels, str) else set(levels)
        unknown = wanted - set(FEATURE_LEVELS)
        if unknown:
            raise MlcflError(f"unknown feature levels {sorted(unknown)}")
        self.n_channels = frames[0].n_channels
        cfg = self.config
        need_low = bool(wanted & {"low", "compl", "mlcf"})
        need_mid = bool(wanted & {"mid", "compl", "mlcf"})
        need_compl = bool(wanted & {"compl", "mlcf"})

        if need_low:
            X = self._low_raw(frames)
            if cfg.lowlevel.family == "ecdf-pca":
                self.pca = pca_fit(X, cfg.lowlevel.pca_components,
                                   n_points=cfg.lowlevel.ecdf_points)
                X = pca_transform_matrix(self.pca, X)
            if cfg.lowlevel.normalize:
                self.low_norm = zscore_fit(X)
                X = zscore_apply_matrix(self.low_norm, X)
            self.train_features["low"] = X

        if need_mid:
            params = subframe_params(cfg)
            per_channel = [
                np.concatenate([subframe_vectors(f, ch, params) for f in frames])
                for ch in range(self.n_channels)
            ]
            self.sub_norms = tuple(zscore_fit(v) for v in per_channel)
            normalized = [zscore_apply_matrix(self.sub_norms[ch], per_channel[ch])
                          for ch in range(self.n_channels)]
            if cfg.midlevel.scope == "joint":
                pooled = np.concatenate(normalized)
                self.codebooks = (kmeans_fit(
                    pooled, cfg.midlevel.dict_k,
                    seed=stable_seed(cfg.seed, "codebook", "joint"),
                    max_iter=cfg.midlevel.kmeans_max_iter,
                    channel_scope="joint",
                ),)
            else:
                self.codebooks = tuple(
                    kmeans_fit(normalized[ch], cfg.midlevel.dict_k,
                               seed=stable_seed(cfg.seed, "codebook", ch),
                               max_iter=cfg.midlevel.kmeans_max_iter)
                    for ch in range(self.n_channels)
                )
            self.train_features["mid"] = self._mid(frames)

        if need_compl:
            self.train_features["compl"] = np.hstack(
                [self.train_features["low"], self.train_features["mid"]]
            )

        if "mlcf" in wanted:
            y = frame_labels(frames)
            class_ids = sorted(int(c) for c in np.unique(y))
            if not cfg.mlpl.include_null_class and 0 in class_ids:
                class_ids.remove(0)
            train_cfg = TrainConfig(
                alpha=cfg.mlpl.alpha,
                n_iter=cfg.mlpl.n_iter,
                scales=cfg.mlpl.scales,
                seed=stable_seed(cfg.seed, "mlpl"),
                solver_tol=cfg.mlpl.solver_tol,
                solver_max_epochs=cfg.mlpl.solver_max_epochs,
                negative_cap=cfg.mlpl.negative_cap,
            )
            self.mlpl_model = mlpl_fit(self.train_features["compl"], y, train_cfg,
                                       class_ids=class_ids)
            self.train_features["mlcf"] = mlpl_transform_matrix(
                self.mlpl_model, self.train_features["compl"]
            )
        return self

    def transform(self, frames, level: str) -> np.ndarray:
        if not frames:
            dim = self.dimensions().get(level)
            return np.zeros((0, dim if dim else 0))
        return self._features(frames, level)

    def dimensions(self) -> dict[str, int]:
        """Output dimension per available feature level."""
        dims: dict[str, int] = {}
        cfg = self.config.lowlevel
        if self.n_channels is not None:
            if cfg.family == "stat":
                dims["low"] = stat_dim(self.n_channels)
            elif cfg.family == "fft":
                dims["low"] = cfg.fft_coeffs * self.n_channels
            else:
                dims["low"] = cfg.pca_components
        if self.codebooks is not None:
            if self.config.midlevel.scope == "joint":
                dims["mid"] = self.codebooks[0].k
            else:
                dims["mid"] = self.codebooks[0].k * len(self.codebooks)
            if "low" in dims:
                dims["compl"] = dims["low"] + dims["mid"]
        if self.mlpl_model is not None:
            dims["mlcf"] = self.mlpl_model.embedding_dim
        return dims

    # -- serialization hooks -------------------------------------------------
    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every fitted parameter as (name, array), in a fixed order."""
        out: list[tuple[str, np.ndarray]] = []
        if self.pca is not None:
            out.append(("low.pca.basis", self.pca.basis))
            out.append(("low.pca.center", self.pca.center))
            out.append(("low.pca.eigenvalues", self.pca.eigenvalues))
        if self.low_norm is not None:
            out.append(("low.norm.mean", self.low_norm.mean))
            out.append(("low.norm.std", self.low_norm.std))
        if self.sub_norms is not None:
            out.append(("mid.norm.mean", np.stack([n.mean for n in self.sub_norms])))
            out.append(("mid.norm.std", np.stack([n.std for n in self.sub_norms])))
        if self.codebooks is not None:
            if self.config.midlevel.scope == "joint":
                out.append(("mid.codebook_joint", self.codebooks[0].centroids))
            else:
                out.append(("mid.codebooks",
                            np.stack([c.centroids for c in self.codebooks])))
        if self.mlpl_model is not None:
            for scale in self.mlpl_model.scales:
                for cid in self.mlpl_model.class_ids:
                    model = self.mlpl_model.models[(scale, cid)]
                    out.append((f"mlpl.s{scale}.c{cid}.W", model.weights))
        return out


# ---------------------------------------------------------------------------
# Classifier plumbing
# ---------------------------------------------------------------------------

def fit_classifier(kind: str, X: np.ndarray, y: np.ndarray,
                   config: ClassifierConfig, seed: int = 0):
    if kind == "knn":
        return knn_fit(X, y, k=config.neighbor_k)
    if kind == "svm":
        return linear_fit(X, y, c=config.svm_c, seed=seed)
    if kind == "ncc":
        return ncc_fit(X, y)
    raise MlcflError(f"unknown classifier kind {kind!r}")


def predict_batch(classifier, X: np.ndarray) -> np.ndarray:
    if isinstance(classifier, KnnModel):
        return knn_predict_batch(classifier, X)
    if isinstance(classifier, LinearClassifier):
        return linear_predict_batch(classifier, X)
    if isinstance(classifier, NccModel):
        return ncc_predict_batch(classifier, X)
    raise MlcflError(f"unknown classifier object {type(classifier)!r}")


def prediction_scores(classifier, x: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    """Per-class confidence for one instance: linear scores, KNN votes, or
    negative centroid distance."""
    if isinstance(classifier, KnnModel):
        class_ids = tuple(sorted(int(c) for c in np.unique(classifier.y)))
        votes = knn_votes(classifier, x)
        return class_ids, np.asarray([float(votes.get(c, 0)) for c in class_ids])
    if isinstance(classifier, LinearClassifier):
        return classifier.class_ids, linear_scores(classifier, x)
    if isinstance(classifier, NccModel):
        dist = ((classifier.centroids - np.asarray(x)) ** 2).sum(axis=1)
        return classifier.class_ids, -np.sqrt(dist)
    raise MlcflError(f"unknown classifier object {type(classifier)!r}")


def classifier_arrays(classifier) -> list[tuple[str, np.ndarray]]:
    if isinstance(classifier, KnnModel):
        return [("clf.knn.X", classifier.X),
                ("clf.knn.y", classifier.y.astype(np.int64))]
    if isinstance(classifier, LinearClassifier):
        return [("clf.svm.weights", classifier.weights),
                ("clf.svm.class_ids", np.asarray(classifier.class_ids, dtype=np.int64))]
    if isinstance(classifier, NccModel):
        return [("clf.ncc.centroids", classifier.centroids),
                ("clf.ncc.class_ids", np.asarray(classifier.class_ids, dtype=np.int64))]
    raise MlcflError(f"unknown classifier object {type(classifier)!r}")


def params_digest(arrays: list[tuple[str, np.ndarray]]) -> str:
    """SHA-256 fingerprint over named parameter arrays (bit-exact)."""
    h = hashlib.sha256()
    for name, arr in arrays:
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


@dataclass
class FittedModel:
    """Everything needed to reproduce predictions end to end."""

    config: PipelineConfig
    label_table: dict[str, int]
    stack: FeatureStack
    classifier: object

    @property
    def inverse_labels(self) -> dict[int, str]:
        return {v: k for k, v in self.label_table.items()}


def fit_full(frames, config: PipelineConfig,
             label_table: dict[str, int] | None = None) -> FittedModel:
    """Fit the feature stack and the configured classifier on all frames."""
    stack = FeatureStack(config).fit(frames, config.level)
    y = frame_labels(frames)
    classifier = fit_classifier(config.classifier.kind,
                                stack.train_features[config.level], y,
                                config.classifier,
                                seed=stable_seed(config.seed, "classifier"))
    return FittedModel(config=config, label_table=label_table or {},
                       stack=stack, classifier=classifier)
