"""
Processo de inferência: pop-up do objeto em um quadro (--cloud) ou em uma
sequência (--sequence), com suavização temporal dos centros.

Uso:
    python3 -m process.infer
    (ou `python3 main.py infer --checkpoint runs/popup/checkpoint.npz --cloud frame.ply --class ball`)

Sem classe informada, a rede precisa ter a cabeça de classe (MODEL__CLASS_HEAD).
"""

import logging
import os

from data.dataset import read_frame_sequence
from geometry.mesh_io import load_point_cloud
from inference.export import export_estimates
from inference.pipeline import PopupPredictor, PoseEstimate, popup_sequence
from popup.model import load_network
from tools.config import PopupConfig, load_config
from tools.errors import ConfigError
from tools.logs import configure_logging
from tools.tools import ClassNameResolver

logger = logging.getLogger(__name__)


class InferProcessor:
    def __init__(
        self,
        config: PopupConfig,
        checkpoint: str,
        out_dir: str,
        cloud: str | None = None,
        sequence: str | None = None,
        class_name: str | None = None,
        sigma: float | None = None,
        fps: float | None = None,
    ):
        if (cloud is None) == (sequence is None):
            raise ConfigError("informe exatamente um entre --cloud e --sequence")
        self.config = config
        self.checkpoint = checkpoint
        self.out_dir = out_dir
        self.cloud = cloud
        self.sequence = sequence
        self.class_name = class_name
        self.sigma = config.inference.sigma if sigma is None else sigma
        self.fps = config.data.fps if fps is None else fps

    def processar(self) -> list[PoseEstimate]:
        net, templates, _ = load_network(self.checkpoint)
        names = [t.name for t in templates]
        class_id = None if self.class_name is None else ClassNameResolver.resolve(self.class_name, names)

        if self.cloud is not None:
            cloud = load_point_cloud(self.cloud)
            estimates = [PopupPredictor(net, templates).popup_single(cloud, class_id, frame_index=0)]
        else:
            seq = read_frame_sequence(self.sequence, self.fps)
            logger.info("Sequência com %d quadros, sigma=%g", len(seq), self.sigma)
            estimates = popup_sequence(
                seq, net, templates, self.sigma, class_id, self.config.inference.vote_rule
            )

        for estimate in estimates:
            if not estimate.transform.unique:
                logger.warning("Quadro %s: alinhamento de Procrustes degenerado", estimate.frame_index)
        export_estimates(estimates, self.out_dir, names)
        logger.info("✅ %d poses estimadas (classe %s)", len(estimates), names[estimates[0].class_used])
        return estimates


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    CHECKPOINT = "runs/popup/checkpoint.npz"
    CLOUD = "input/frame.ply"
    CLASS_NAME = "ball"  # None para prever a classe
    OUT_DIR = "runs/popup/inference"

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    InferProcessor(config, CHECKPOINT, OUT_DIR, cloud=CLOUD, class_name=CLASS_NAME).processar()
