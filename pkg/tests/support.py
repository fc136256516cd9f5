"""Configurações em miniatura compartilhadas pelos testes."""

import numpy as np

from popup.model import PopupNetwork
from tools.config import DataConfig, ModelConfig, TrainConfig

TINY_KEYPOINTS = 12

TINY_DATA = DataConfig(
    sequences=12,
    frames=6,
    points=150,
    fps=30.0,
    num_keypoints=TINY_KEYPOINTS,
    val_fraction=0.25,
    test_fraction=0.25,
    seed=5,
)


def tiny_model_config(**overrides) -> ModelConfig:
    values = dict(
        num_classes=2,
        num_keypoints=TINY_KEYPOINTS,
        local_k=40,
        global_sa1_npoint=16,
        global_sa1_nsample=8,
        global_sa1_widths=(8, 8),
        global_sa2_npoint=6,
        global_sa2_nsample=4,
        global_sa2_widths=(8,),
        global_widths=(12,),
        center_head_widths=(8,),
        local_sa_npoint=8,
        local_sa_nsample=6,
        local_sa_widths=(8,),
        local_fp_widths=(8,),
        fp_neighbors=3,
        posenc_bands=2,
        decoder_layers=2,
        decoder_width=8,
        class_head=True,
        init_seed=0,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(
        epochs=3,
        lr=1e-3,
        lr_decay_epochs=(),
        warmup_epochs_gt_center=1,
        batch_size=4,
        seed=0,
        train_fps=10.0,
    )
    values.update(overrides)
    return TrainConfig(**values)


def randomize_parameters(net: PopupNetwork, seed: int = 1, scale: float = 0.5) -> None:
    """Pesos e vieses aleatórios, para longe das dobras da ReLU em zero."""
    rng = np.random.default_rng(seed)
    for p in net.parameters().values():
        p.data = rng.normal(0.0, scale, p.shape)
