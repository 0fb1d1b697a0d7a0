"""Versioned single-file model container.

Stores the resolved pipeline config, the label table and every fitted
parameter array, so a model file alone reproduces predictions. Loading a
file and saving it again is byte-identical; unsupported versions are
rejected outright. The header deliberately carries no timestamps: refitting
with the same data, config and seed must produce the same bytes.
"""

from __future__ import annotations

import numpy as np

from . import binio
from .classifiers import KnnModel, LinearClassifier, NccModel
from .errors import ContainerError
from .lowlevel import EcdfPcaParams, NormalizerParams
from .midlevel import Codebook
from .mlpl import ClassLatentModel, MlplModel
from .pipeline import FeatureStack, FittedModel, PipelineConfig, classifier_arrays

MODEL_MAGIC = b"MLCF"
MODEL_VERSION = 1


def save_model(model: FittedModel, path) -> None:
    stack = model.stack
    arrays = stack.param_arrays() + classifier_arrays(model.classifier)
    header: dict = {
        "kind": "mlcfl-model",
        "config": model.config.to_dict(),
        "label_table": model.label_table,
        "classifier_kind": model.config.classifier.kind,
        "n_channels": stack.n_channels,
        "mlcf_order": "scale-major, class ascending, latent 0..K",
        "library": "mlcfl 0.1.0",
    }
    if isinstance(model.classifier, KnnModel):
        header["knn_k"] = model.classifier.k
    if isinstance(model.classifier, LinearClassifier):
        header["svm_c"] = model.classifier.c
    if stack.mlpl_model is not None:
        header["mlpl"] = {
            "input_dim": stack.mlpl_model.input_dim,
            "class_ids": list(stack.mlpl_model.class_ids),
            "scales": list(stack.mlpl_model.scales),
        }
    binio.write_container(path, MODEL_MAGIC, MODEL_VERSION, header, arrays)


def _rebuild_stack(config: PipelineConfig, header: dict,
                   arrays: dict[str, np.ndarray]) -> FeatureStack:
    stack = FeatureStack(config)
    if header.get("n_channels") is not None:
        stack.n_channels = int(header["n_channels"])
    if "low.pca.basis" in arrays:
        stack.pca = EcdfPcaParams(
            n_components=arrays["low.pca.basis"].shape[0],
            basis=arrays["low.pca.basis"],
            center=arrays["low.pca.center"],
            eigenvalues=arrays["low.pca.eigenvalues"],
            n_points=config.lowlevel.ecdf_points,
        )
    if "low.norm.mean" in arrays:
        stack.low_norm = NormalizerParams(mean=arrays["low.norm.mean"],
                                          std=arrays["low.norm.std"])
    if "mid.norm.mean" in arrays:
        means = arrays["mid.norm.mean"]
        stds = arrays["mid.norm.std"]
        stack.sub_norms = tuple(NormalizerParams(mean=means[i], std=stds[i])
                                for i in range(means.shape[0]))
        stack.n_channels = means.shape[0]
    if "mid.codebook_joint" in arrays:
        stack.codebooks = (Codebook(centroids=arrays["mid.codebook_joint"],
                                    channel_scope="joint"),)
    elif "mid.codebooks" in arrays:
        books = arrays["mid.codebooks"]
        stack.codebooks = tuple(Codebook(centroids=books[i])
                                for i in range(books.shape[0]))
    if "mlpl" in header:
        meta = header["mlpl"]
        class_ids = tuple(int(c) for c in meta["class_ids"])
        scales = tuple(int(s) for s in meta["scales"])
        models = {}
        for scale in scales:
            for cid in class_ids:
                weights = arrays[f"mlpl.s{scale}.c{cid}.W"]
                models[(scale, cid)] = ClassLatentModel(
                    weights=weights, class_id=cid, latent_k=scale
                )
        stack.mlpl_model = MlplModel(
            input_dim=int(meta["input_dim"]),
            class_ids=class_ids,
            scales=scales,
            models=models,
        )
    return stack


def _rebuild_classifier(header: dict, arrays: dict[str, np.ndarray]):
    kind = header["classifier_kind"]
    if kind == "knn":
        return KnnModel(X=arrays["clf.knn.X"], y=arrays["clf.knn.y"],
                        k=int(header["knn_k"]))
    if kind == "svm":
        return LinearClassifier(
            class_ids=tuple(int(c) for c in arrays["clf.svm.class_ids"]),
            weights=arrays["clf.svm.weights"],
            c=float(header.get("svm_c", 1.0)),
        )
    if kind == "ncc":
        return NccModel(
            class_ids=tuple(int(c) for c in arrays["clf.ncc.class_ids"]),
            centroids=arrays["clf.ncc.centroids"],
        )
    raise ContainerError(f"unknown classifier kind {kind!r} in model file")


def load_model(path) -> FittedModel:
    header, arrays = binio.read_container(path, MODEL_MAGIC, MODEL_VERSION)
    if header.get("kind") != "mlcfl-model":
        raise ContainerError(f"{path}: not a model container")
    config = PipelineConfig.from_dict(header["config"])
    stack = _rebuild_stack(config, header, arrays)
    classifier = _rebuild_classifier(header, arrays)
    label_table = {str(k): int(v) for k, v in header["label_table"].items()}
    return FittedModel(config=config, label_table=label_table,
                       stack=stack, classifier=classifier)
