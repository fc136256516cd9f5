"""
Configuração do projeto em formato `.env`.

As chaves usam seções aninhadas separadas por `__`:

    MODEL__LOCAL_K=3000
    TRAIN__EPOCHS=60
    DATA__CLASSES=box,stick,ball,board

O arquivo é lido com `dotenv_values` e as variáveis de ambiente com as mesmas
chaves têm prioridade. `dump_config` gera um arquivo que volta a carregar
exatamente a mesma configuração.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import dataclass, field

from dotenv import dotenv_values

from tools.errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Arquitetura da rede (embutida em todo checkpoint)."""

    num_classes: int = 4
    num_keypoints: int = 1500
    local_k: int = 3000
    global_sa1_npoint: int = 512
    global_sa1_nsample: int = 32
    global_sa1_widths: tuple[int, ...] = (64, 64, 128)
    global_sa2_npoint: int = 128
    global_sa2_nsample: int = 64
    global_sa2_widths: tuple[int, ...] = (128, 128, 256)
    global_widths: tuple[int, ...] = (256, 512)
    center_head_widths: tuple[int, ...] = (256,)
    local_sa_npoint: int = 256
    local_sa_nsample: int = 32
    local_sa_widths: tuple[int, ...] = (64, 64, 128)
    local_fp_widths: tuple[int, ...] = (128, 128)
    fp_neighbors: int = 3
    posenc_bands: int = 6
    decoder_layers: int = 4
    decoder_width: int = 256
    class_head: bool = False
    class_head_input: str = "global"
    class_head_widths: tuple[int, ...] = (256,)
    direct_rt: bool = False
    no_local_features: bool = False
    init_seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ConfigError("MODEL__NUM_CLASSES deve ser >= 1")
        if self.num_keypoints < 3:
            raise ConfigError("MODEL__NUM_KEYPOINTS deve ser >= 3")
        if self.local_k < 1:
            raise ConfigError("MODEL__LOCAL_K deve ser >= 1")
        if self.decoder_layers < 1:
            raise ConfigError("MODEL__DECODER_LAYERS deve ser >= 1")
        if self.class_head_input not in ("global", "global_local"):
            raise ConfigError(
                "MODEL__CLASS_HEAD_INPUT deve ser 'global' ou 'global_local'"
            )
        for name in (
            "global_sa1_widths",
            "global_sa2_widths",
            "global_widths",
            "local_sa_widths",
            "local_fp_widths",
        ):
            if not getattr(self, name):
                raise ConfigError(f"MODEL__{name.upper()} não pode ser vazio")

    @property
    def global_feature_dim(self) -> int:
        return self.global_widths[-1]

    @property
    def local_feature_dim(self) -> int:
        return self.local_fp_widths[-1]


@dataclass(frozen=True)
class TrainConfig:
    """Otimização, agenda de LR, aquecimento, aumento de dados e ablações."""

    epochs: int = 60
    lr: float = 1e-4
    lr_decay_epochs: tuple[int, ...] = (30, 40)
    lr_decay_factor: float = 10.0
    warmup_epochs_gt_center: int = 20
    alpha: float | None = None
    batch_size: int = 16
    seed: int = 0
    aug_translation: float = 0.05
    aug_rotation_deg: float = 15.0
    weight_decay: float = 0.0
    grad_clip: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    train_fps: float = 10.0
    direct_rt: bool = False
    no_local_features: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("TRAIN__EPOCHS deve ser >= 1")
        if self.epochs <= self.warmup_epochs_gt_center:
            raise ConfigError(
                "TRAIN__EPOCHS deve ser maior que TRAIN__WARMUP_EPOCHS_GT_CENTER"
            )
        if any(e >= self.epochs or e < 0 for e in self.lr_decay_epochs):
            raise ConfigError("TRAIN__LR_DECAY_EPOCHS deve ficar em [0, epochs)")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError("TRAIN__ALPHA deve ser > 0")
        if self.lr <= 0:
            raise ConfigError("TRAIN__LR deve ser > 0")
        if self.batch_size < 1:
            raise ConfigError("TRAIN__BATCH_SIZE deve ser >= 1")
        if self.lr_decay_factor <= 0:
            raise ConfigError("TRAIN__LR_DECAY_FACTOR deve ser > 0")
        if self.aug_translation < 0 or self.aug_rotation_deg < 0:
            raise ConfigError("intervalos de aumento de dados devem ser >= 0")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("TRAIN__GRAD_CLIP deve ser > 0 ou none")
        if self.train_fps <= 0:
            raise ConfigError("TRAIN__TRAIN_FPS deve ser > 0")

    def resolved_alpha(self, class_head: bool) -> float:
        """alpha = 10, ou 100 quando a cabeça de classe está ligada."""
        if self.alpha is not None:
            return self.alpha
        return 100.0 if class_head else 10.0


@dataclass(frozen=True)
class DataConfig:
    """Gerador sintético e manifesto do dataset."""

    classes: tuple[str, ...] = ("box", "stick", "ball", "board")
    sequences: int = 40
    frames: int = 60
    points: int = 9000
    fps: float = 30.0
    num_keypoints: int = 1500
    seed: int = 0
    template_seed: int = 7
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    interaction_distance: float = 0.05
    input_variant: str = "full"
    write_ply: bool = False
    raw_scans: bool = False
    raw_points: int = 90000
    raw_noise: float = 0.005
    workers: int = 1

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigError("DATA__CLASSES precisa de pelo menos 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("DATA__CLASSES contém nomes repetidos")
        if self.sequences < 1 or self.frames < 1 or self.points < 1:
            raise ConfigError("DATA__SEQUENCES, FRAMES e POINTS devem ser >= 1")
        if self.fps <= 0:
            raise ConfigError("DATA__FPS deve ser > 0")
        if not 0 <= self.val_fraction < 1 or not 0 <= self.test_fraction < 1:
            raise ConfigError("frações de split devem ficar em [0, 1)")
        if self.val_fraction + self.test_fraction >= 1:
            raise ConfigError("VAL_FRACTION + TEST_FRACTION deve ser < 1")
        if self.input_variant not in ("full", "hands", "rest_hands"):
            raise ConfigError(
                "DATA__INPUT_VARIANT deve ser 'full', 'hands' ou 'rest_hands'"
            )
        if self.interaction_distance <= 0:
            raise ConfigError("DATA__INTERACTION_DISTANCE deve ser > 0")
        if self.workers < 1:
            raise ConfigError("DATA__WORKERS deve ser >= 1")
        if self.raw_points < 1 or self.raw_noise < 0:
            raise ConfigError("DATA__RAW_POINTS deve ser >= 1 e DATA__RAW_NOISE >= 0")


@dataclass(frozen=True)
class InferenceConfig:
    sigma: float = 3.0
    vote_rule: str = "majority"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("INFERENCE__SIGMA deve ser > 0")
        if self.vote_rule not in ("majority", "max_score"):
            raise ConfigError("INFERENCE__VOTE_RULE deve ser 'majority' ou 'max_score'")


@dataclass(frozen=True)
class SaliencyConfig:
    iterations: int = 10
    fraction: float = 0.01
    step: float = 0.05

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("SALIENCY__ITERATIONS deve ser >= 0")
        if not 0 < self.fraction <= 1:
            raise ConfigError("SALIENCY__FRACTION deve ficar em (0, 1]")
        if not 0 < self.step < 1:
            raise ConfigError("SALIENCY__STEP deve ficar em (0, 1)")


@dataclass(frozen=True)
class PopupConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    saliency: SaliencyConfig = field(default_factory=SaliencyConfig)


SECTIONS = {
    "MODEL": ("model", ModelConfig),
    "TRAIN": ("train", TrainConfig),
    "DATA": ("data", DataConfig),
    "INFERENCE": ("inference", InferenceConfig),
    "SALIENCY": ("saliency", SaliencyConfig),
}


def _coerce(raw: str, annotation, key: str):
    """Converte o texto do `.env` para o tipo do campo."""
    text = raw.strip()
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin in (typing.Union, types.UnionType):
        if text.lower() in ("none", "null", ""):
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(text, inner, key)
    if origin is tuple:
        if not text:
            return ()
        return tuple(_coerce(item, args[0], key) for item in text.split(","))
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "sim", "on"):
                return True
            if lowered in ("0", "false", "no", "nao", "não", "off"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"Valor inválido para {key}: {raw!r}") from e


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def build_section(cls, raw_values: dict[str, str], section: str):
    """Instancia o dataclass da seção a partir de textos crus."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in raw_values.items():
        name = key.lower()
        if name not in names:
            raise ConfigError(f"Chave desconhecida: {section}__{key}")
        kwargs[name] = _coerce(raw, hints[name], f"{section}__{key}")
    return cls(**kwargs)


def load_config(path: str | None = None, use_environ: bool = True) -> PopupConfig:
    """
    Carrega a configuração de um arquivo `.env` (opcional) e do ambiente.
    """
    values: dict[str, str] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
    if use_environ:
        values.update(
            {
                k: v
                for k, v in os.environ.items()
                if "__" in k and k.split("__", 1)[0] in SECTIONS
            }
        )

    grouped: dict[str, dict[str, str]] = {name: {} for name in SECTIONS}
    for key, raw in values.items():
        if "__" not in key:
            continue
        section, name = key.split("__", 1)
        if section not in SECTIONS:
            continue
        grouped[section][name] = raw

    kwargs = {
        attr: build_section(cls, grouped[section], section)
        for section, (attr, cls) in SECTIONS.items()
    }
    return PopupConfig(**kwargs)


def dump_config(config: PopupConfig) -> str:
    """Gera o texto `.env` com todas as chaves e valores."""
    lines = []
    for section, (attr, _) in SECTIONS.items():
        lines.append(f"# [{attr}]")
        sub = getattr(config, attr)
        for f in dataclasses.fields(sub):
            lines.append(f"{section}__{f.name.upper()}={_render(getattr(sub, f.name))}")
        lines.append("")
    return "\n".join(lines)


def model_config_to_dict(config: ModelConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}


def model_config_from_dict(values: dict) -> ModelConfig:
    names = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"Chaves de arquitetura desconhecidas: {sorted(unknown)}")
    return ModelConfig(
        **{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    )


def config_hash(config: ModelConfig) -> str:
    """SHA-256 (16 primeiros hex) do JSON canônico da arquitetura."""
    payload = json.dumps(model_config_to_dict(config), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def resolve_model_config(model: ModelConfig, train: TrainConfig) -> ModelConfig:
    """Aplica as flags de ablação do treino sobre a arquitetura."""
    return dataclasses.replace(
        model,
        direct_rt=model.direct_rt or train.direct_rt,
        no_local_features=model.no_local_features or train.no_local_features,
    )
