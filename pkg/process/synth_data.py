"""
Processo de geração do dataset sintético.

Uso:
    python3 -m process.synth_data
    (ou `python3 main.py synth-data --out datasets/synthetic --seed 0`)

Ajuste as chaves DATA__* no `.env` para mudar classes, número de sequências,
quadros, pontos por quadro e variante de entrada.
"""

import logging
import os

from data.synthetic import generate_synthetic
from tools.config import PopupConfig, load_config
from tools.logs import configure_logging

logger = logging.getLogger(__name__)


class SyntheticDataProcessor:
    """Gera sequências da figura articulada com objetos e grava o manifesto."""

    def __init__(self, config: PopupConfig, out_dir: str, seed: int | None = None):
        self.config = config
        self.out_dir = out_dir
        self.seed = seed

    def processar(self) -> str:
        data = self.config.data
        logger.info(
            "Gerando %d sequências x %d quadros (%d pontos) para as classes %s",
            data.sequences, data.frames, data.points, ", ".join(data.classes),
        )
        manifest = generate_synthetic(data, self.out_dir, self.seed)
        logger.info("✅ Manifesto salvo em %s", manifest)
        return manifest


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    OUT_DIR = "datasets/synthetic"
    SEED = None  # None usa DATA__SEED

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    SyntheticDataProcessor(config, OUT_DIR, SEED).processar()
