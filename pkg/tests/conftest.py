import numpy as np
import pytest

from mlcfl import dataio
from mlcfl.pipeline import (
    ClassifierConfig,
    FramingConfig,
    LowLevelConfig,
    MidLevelConfig,
    MlplConfig,
    PipelineConfig,
    SplitConfig,
    frames_from_streams,
)

SAMPLE_RATE = 32.0
# tones on-bin for the 20-sample sub-frame window (phase-invariant features)
FREQS = (3.2, 4.8, 6.4)


def _motif(offset, freq, n_channels=3):
    return dataio.Motif(freq_hz=freq, amps=(1.0,) * n_channels,
                        offsets=(offset,) * n_channels)


def cyclic_classes(f1=FREQS[0], f2=FREQS[1], f3=FREQS[2]):
    """Three classes on a cyclic (sign, tone) grid: every tone and every
    offset sign is shared between two classes, so neither the sign-only nor
    the tone-only view separates them and no linear score assignment can
    rank all six corners correctly."""
    return (
        (_motif(+1.0, f1), _motif(-1.0, f2)),
        (_motif(-1.0, f1), _motif(+1.0, f3)),
        (_motif(+1.0, f2), _motif(-1.0, f3)),
    )


def small_config(seed=0, **overrides):
    defaults = dict(
        seed=seed,
        framing=FramingConfig(window=64, overlap=0.5, label_policy="single"),
        lowlevel=LowLevelConfig(family="stat"),
        midlevel=MidLevelConfig(dict_k=8, sub_window=20, sub_overlap=0.5,
                                subframe_family="fft"),
        mlpl=MlplConfig(alpha=1.0, scales=(2,), n_iter=2),
        classifier=ClassifierConfig(kind="knn", neighbor_k=5),
        split=SplitConfig(mode="random-kfold", k=4),
        level="mlcf",
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


@pytest.fixture(scope="session")
def small_synth():
    """~140-frame cyclic dataset plus a matching pipeline config."""
    spec = dataio.SynthSpec(
        classes=cyclic_classes(),
        segment_len=256,
        segments_per_pattern=((4, 3), (3, 4), (4, 3)),
        sample_rate=SAMPLE_RATE,
        noise=0.05,
    )
    result = dataio.synth_streams(spec, seed=7)
    config = small_config(seed=7)
    frames = frames_from_streams(result.streams, config)
    return frames, result, config
