"""mlcfl: multi-level feature learning for sensor-based action recognition.

Three feature phases over sliding-window frames of inertial signals:
low-level signal features (statistics, FFT magnitudes, ECDF-PCA), a
bag-of-words over a learned motion-primitive codebook, and a max-margin
latent-pattern embedding, plus classifiers and a weighted-F1 evaluation
harness.
"""

from .dataio import (
    CsvSchema,
    Frame,
    Motif,
    SensorStream,
    SplitPlan,
    SubFrame,
    SynthSpec,
    frame_stream,
    load_csv,
    make_splits,
    random_motifs,
    subframes,
    synth_streams,
)
from .errors import (
    ContainerError,
    DataFormatError,
    DimensionError,
    MlcflError,
    RankDeficiencyError,
    SchemaError,
    SplitError,
    TrainingDataError,
)
from .evaluation import (
    EvalReport,
    accuracy,
    compare_levels,
    confusion_counts,
    run_cv,
    weighted_f1,
)
from .lowlevel import (
    EcdfPcaParams,
    FeatureVector,
    NormalizerParams,
    ecdf_feature,
    fft_features,
    pca_fit,
    pca_transform,
    stat_features,
    zscore_apply,
    zscore_fit,
)
from .midlevel import (
    BowHistogram,
    Codebook,
    SubframeParams,
    assign,
    bow_encode,
    compl_concat,
    kmeans_fit,
)
from .mlpl import (
    ClassLatentModel,
    MlplModel,
    TrainConfig,
    hinge_loss,
    mlpl_fit,
    mlpl_transform,
    objective,
    solve_multiclass_svm,
    train_class,
)
from .classifiers import (
    KnnModel,
    LinearClassifier,
    NccModel,
    knn_fit,
    knn_predict,
    linear_fit,
    linear_predict,
    ncc_fit,
    ncc_predict,
)
from .pipeline import FeatureStack, FittedModel, PipelineConfig, fit_full
from .container import load_model, save_model

__version__ = "0.1.0"
