"""
Processo de treino da rede de pop-up sobre um dataset gerado.

Uso:
    python3 -m process.train
    (ou `python3 main.py train --data datasets/synthetic --out runs/popup`)

Saídas em OUT_DIR: checkpoint.npz, checkpoint_last.npz, train_log.jsonl,
loss_curve.csv e config.env com a configuração usada.
"""

import dataclasses
import logging
import os

from data.dataset import load_dataset
from tools.config import PopupConfig, dump_config, load_config
from tools.logs import configure_logging
from tools.tools import atomic_write_text
from training.trainer import TrainResult, train

logger = logging.getLogger(__name__)


class TrainProcessor:
    def __init__(self, config: PopupConfig, data_dir: str, out_dir: str):
        self.config = config
        self.data_dir = data_dir
        self.out_dir = out_dir

    def _model_config(self, dataset):
        """Ajusta número de classes e de keypoints ao que o dataset traz."""
        model = self.config.model
        num_keypoints = len(dataset.templates[0].keypoints)
        if model.num_classes != len(dataset.classes) or model.num_keypoints != num_keypoints:
            logger.info(
                "Arquitetura ajustada ao dataset: %d classes, %d keypoints",
                len(dataset.classes), num_keypoints,
            )
            model = dataclasses.replace(model, num_classes=len(dataset.classes), num_keypoints=num_keypoints)
        return model

    def processar(self) -> TrainResult:
        dataset = load_dataset(self.data_dir)
        train_cfg = self.config.train
        model = self._model_config(dataset)
        train_samples = dataset.train_samples("train", fps=train_cfg.train_fps)
        val_samples = dataset.train_samples("val", fps=train_cfg.train_fps)
        logger.info(
            "Treino com %d quadros (%g fps) e validação com %d quadros",
            len(train_samples), train_cfg.train_fps, len(val_samples),
        )

        os.makedirs(self.out_dir, exist_ok=True)
        used = dataclasses.replace(self.config, model=model)
        atomic_write_text(os.path.join(self.out_dir, "config.env"), dump_config(used))

        result = train(model, train_cfg, dataset.templates, train_samples, self.out_dir, val_samples)
        logger.info("✅ Treino concluído: %s", result.checkpoint_path)
        return result


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    DATA_DIR = "datasets/synthetic"
    OUT_DIR = "runs/popup"

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    TrainProcessor(config, DATA_DIR, OUT_DIR).processar()
