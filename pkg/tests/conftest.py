import numpy as np
import pytest

from gazeattn.backbone import BackboneConfig
from gazeattn.synth import SynthConfig, synth_generate

# Small enough to generate in well under a second, still 8 users for LOUO.
TINY_SYNTH = SynthConfig(
    seed=11,
    num_users=8,
    trials_per_user=1,
    height=32,
    width=32,
    num_classes=4,
    min_segments=2,
    max_segments=3,
    min_segment_frames=20,
    max_segment_frames=24,
)

TINY_BACKBONE = BackboneConfig(
    in_frames=4,
    in_height=32,
    in_width=32,
    num_classes=4,
    stem_channels=6,
    stem_kernel=(3, 3, 3),
    stem_stride=(2, 2, 2),
    stage_channels=(6, 8),
    stage_strides=((1, 2, 2), (1, 2, 2)),
    attention_stage=2,
    attention_branch_widths=(4, 4, 3, 3),
    attention_reduce_widths=(3, 2),
    dropout=0.5,
)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tinyds") / "ds"
    synth_generate(out, TINY_SYNTH)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)
