"""
Laço de treino da rede de pop-up.

Cada amostra tem o seu próprio grafo; os gradientes são acumulados no lote
(divididos pelo tamanho do lote) e aplicados com Adam. Durante as primeiras
`warmup_epochs_gt_center` épocas a vizinhança local e os keypoints são
posicionados no centro verdadeiro; depois, no centro previsto.

Arquivos gerados em `out_dir`:
    train_log.jsonl      um registro por época
    loss_curve.csv       a mesma curva em tabela
    checkpoint_last.npz  checkpoint ao fim de cada época
    checkpoint.npz       checkpoint final
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from engine.optim import Adam, clip_grad_norm
from engine.tensor import no_grad
from popup.model import PopupForward, PopupNetwork, save_network
from popup.templates import ObjectTemplate
from tools.config import ModelConfig, TrainConfig, resolve_model_config
from tools.errors import DataError, NumericError, TrainingDivergedError
from tools.tools import TableFile, atomic_write_text
from training.augment import AugmentationRanges, TrainSample, augment_sample
from training.losses import loss_center, loss_class, loss_offset, total_loss

logger = logging.getLogger(__name__)

LOG_FILE = "train_log.jsonl"
CURVE_FILE = "loss_curve.csv"
LAST_CHECKPOINT = "checkpoint_last.npz"
FINAL_CHECKPOINT = "checkpoint.npz"


def learning_rate(epoch: int, config: TrainConfig) -> float:
    """lr base dividido por `lr_decay_factor` a cada época de decaimento já atingida."""
    passed = sum(1 for e in config.lr_decay_epochs if epoch >= e)
    return config.lr / config.lr_decay_factor**passed


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    loss_center: float
    loss_offset: float
    loss_class: float | None
    lr: float
    val_e_c: float | None
    wall_time: float
    samples: int


@dataclass
class TrainResult:
    network: PopupNetwork
    checkpoint_path: str
    log: list[EpochRecord]


class Trainer:
    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        templates: list[ObjectTemplate],
        out_dir: str,
    ):
        self.train_config = train_config
        self.model_config = resolve_model_config(model_config, train_config)
        if len(templates) != self.model_config.num_classes:
            raise DataError(
                f"{len(templates)} templates para {self.model_config.num_classes} classes"
            )
        self.templates = templates
        self.keypoints = {t.class_id: t.keypoints for t in templates}
        self.out_dir = out_dir
        self.net = PopupNetwork(self.model_config)
        self.optimizer = Adam(
            self.net.parameters(),
            beta1=train_config.beta1,
            beta2=train_config.beta2,
            eps=train_config.eps,
            weight_decay=train_config.weight_decay,
        )
        self.alpha = train_config.resolved_alpha(self.model_config.class_head)
        self.ranges = AugmentationRanges(train_config.aug_translation, train_config.aug_rotation_deg)
        self.log: list[EpochRecord] = []

    # ---------- passo por amostra ----------

    def forward_sample(self, sample: TrainSample, epoch: int) -> PopupForward:
        warmup = epoch < self.train_config.warmup_epochs_gt_center
        return self.net.forward(
            sample.cloud,
            self.keypoints[sample.class_id],
            sample.class_id,
            center_used=sample.gt_center if warmup else None,
        )

    def sample_losses(self, sample: TrainSample, epoch: int):
        """(total, L_c, L_off, L_cls ou None) como Tensores."""
        out = self.forward_sample(sample, epoch)
        l_center = loss_center(out.center, sample.gt_center)
        gt_offsets = sample.gt_offsets(self.keypoints[sample.class_id], out.center_used)
        l_offset = loss_offset(out.offsets, gt_offsets)
        l_class = loss_class(out.logits, sample.class_id) if out.logits is not None else None
        return total_loss(l_center, l_offset, l_class, self.alpha), l_center, l_offset, l_class

    def validate(self, samples: Sequence[TrainSample]) -> float | None:
        """E_c médio do centro previsto no conjunto de validação."""
        if not samples:
            return None
        errors = []
        with no_grad():
            for sample in samples:
                center, _ = self.net.encode_global(sample.cloud)
                errors.append(float(np.linalg.norm(center.data - sample.gt_center)))
        return math.fsum(errors) / len(errors)

    # ---------- persistência ----------

    def _metadata(self, epoch: int) -> dict:
        cfg = dataclasses.asdict(self.train_config)
        cfg["lr_decay_epochs"] = list(cfg["lr_decay_epochs"])
        return {"epoch": epoch, "alpha": self.alpha, "train_config": cfg}

    def save(self, path: str, epoch: int) -> None:
        save_network(path, self.net, self.templates, self.optimizer.state, self._metadata(epoch))

    def _write_log(self) -> None:
        rows = [dataclasses.asdict(r) for r in self.log]
        atomic_write_text(
            os.path.join(self.out_dir, LOG_FILE),
            "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows),
        )
        TableFile(os.path.join(self.out_dir, CURVE_FILE)).salvar_dados(pd.DataFrame(rows))

    def _diverged(self, epoch: int, reason: str) -> None:
        path = os.path.join(self.out_dir, LAST_CHECKPOINT)
        if epoch == 0 or not os.path.exists(path):
            self.save(path, epoch)
        logger.error("Treino divergiu na época %d: %s", epoch, reason)
        raise TrainingDivergedError(
            f"Treino divergiu na época {epoch}: {reason}. Último checkpoint bom: {path}",
            checkpoint_path=path,
        )

    # ---------- laço ----------

    def run(
        self,
        train_samples: Sequence[TrainSample],
        val_samples: Sequence[TrainSample] = (),
    ) -> TrainResult:
        cfg = self.train_config
        n = len(train_samples)
        if n == 0:
            raise DataError("conjunto de treino vazio")
        os.makedirs(self.out_dir, exist_ok=True)
        logger.info(
            "Treinando %d amostras por %d épocas (alpha=%g, lote=%d)",
            n, cfg.epochs, self.alpha, cfg.batch_size,
        )

        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            lr = learning_rate(epoch, cfg)
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            sums = {"loss": [], "center": [], "offset": [], "class": []}

            for start in range(0, n, cfg.batch_size):
                batch = order[start: start + cfg.batch_size]
                self.optimizer.zero_grad()
                for idx in batch:
                    rng = np.random.default_rng([cfg.seed, epoch, int(idx)])
                    sample = augment_sample(train_samples[int(idx)], rng, self.ranges)
                    try:
                        total, l_c, l_off, l_cls = self.sample_losses(sample, epoch)
                        value = float(total.data)
                        if not math.isfinite(value):
                            raise NumericError(f"perda {value} na amostra {int(idx)}")
                        (total * (1.0 / len(batch))).backward()
                    except NumericError as e:
                        self._diverged(epoch, str(e))
                    sums["loss"].append(value)
                    sums["center"].append(float(l_c.data))
                    sums["offset"].append(float(l_off.data))
                    if l_cls is not None:
                        sums["class"].append(float(l_cls.data))

                grads = self.optimizer.gradients()
                if cfg.grad_clip is not None:
                    clip_grad_norm(grads, cfg.grad_clip)
                try:
                    self.optimizer.step(lr, grads)
                except NumericError as e:
                    self._diverged(epoch, str(e))

            val_e_c = self.validate(val_samples)
            record = EpochRecord(
                epoch=epoch,
                loss=math.fsum(sums["loss"]) / n,
                loss_center=math.fsum(sums["center"]) / n,
                loss_offset=math.fsum(sums["offset"]) / n,
                loss_class=math.fsum(sums["class"]) / n if sums["class"] else None,
                lr=lr,
                val_e_c=val_e_c,
                wall_time=time.perf_counter() - started,
                samples=n,
            )
            self.log.append(record)
            self._write_log()
            self.save(os.path.join(self.out_dir, LAST_CHECKPOINT), epoch)
            logger.info(
                "Época %d/%d: perda=%.6f centro=%.6f offset=%.6f lr=%g val_E_c=%s",
                epoch + 1, cfg.epochs, record.loss, record.loss_center, record.loss_offset,
                lr, "-" if val_e_c is None else f"{val_e_c:.4f}",
            )

        final_path = os.path.join(self.out_dir, FINAL_CHECKPOINT)
        self.save(final_path, cfg.epochs - 1)
        logger.info("Checkpoint final salvo em %s", final_path)
        return TrainResult(network=self.net, checkpoint_path=final_path, log=self.log)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    templates: list[ObjectTemplate],
    train_samples: Sequence[TrainSample],
    out_dir: str,
    val_samples: Sequence[TrainSample] = (),
) -> TrainResult:
    return Trainer(model_config, train_config, templates, out_dir).run(train_samples, val_samples)
