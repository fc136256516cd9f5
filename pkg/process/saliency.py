"""
Processo de saliência: quais pontos da nuvem humana mais influenciam a
perda de offsets, com perturbação iterativa em direção à mediana.

Uso:
    python3 -m process.saliency
    (ou `python3 main.py saliency --checkpoint ... --cloud frame.ply --class ball --gt pose.json`)

O arquivo --gt é um JSON {"R": [9 valores], "t": [3 valores]} ou o
poses.json exportado pela inferência.
"""

import logging
import os

from geometry.mesh_io import load_point_cloud
from inference.export import load_pose_record
from popup.model import load_network
from saliency.saliency import SaliencyResult, export_saliency, near_center_fraction, saliency_iterate
from tools.config import PopupConfig, load_config
from tools.logs import configure_logging
from tools.tools import ClassNameResolver, atomic_write_json

logger = logging.getLogger(__name__)


class SaliencyProcessor:
    def __init__(
        self,
        config: PopupConfig,
        checkpoint: str,
        cloud: str,
        class_name: str,
        gt: str,
        out_dir: str,
        frame: int | None = None,
    ):
        self.config = config
        self.checkpoint = checkpoint
        self.cloud = cloud
        self.class_name = class_name
        self.gt = gt
        self.out_dir = out_dir
        self.frame = frame

    def processar(self) -> SaliencyResult:
        net, templates, _ = load_network(self.checkpoint)
        class_id = ClassNameResolver.resolve(self.class_name, [t.name for t in templates])
        cloud = load_point_cloud(self.cloud)
        gt, _ = load_pose_record(self.gt, self.frame)

        cfg = self.config.saliency
        result = saliency_iterate(
            cloud.points, class_id, gt, net, templates[class_id],
            iters=cfg.iterations, frac=cfg.fraction, step=cfg.step,
        )
        export_saliency(result, cloud.points, self.out_dir)
        near = near_center_fraction(cloud.points, result.touched, gt.t)
        atomic_write_json(
            os.path.join(self.out_dir, "summary.json"),
            {
                "iterations": cfg.iterations,
                "touched_per_iteration": int(len(result.masks[0])) if result.masks else 0,
                "touched_union": int(len(result.touched)),
                "near_center_fraction": near,
                "loss_offset": result.loss_trace,
            },
        )
        logger.info("✅ Saliência salva em %s (%.1f%% dos pontos tocados perto do objeto)", self.out_dir, 100 * near)
        return result


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    CHECKPOINT = "runs/popup/checkpoint.npz"
    CLOUD = "input/frame.ply"
    CLASS_NAME = "ball"
    GT = "input/pose.json"
    OUT_DIR = "runs/popup/saliency"

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    SaliencyProcessor(config, CHECKPOINT, CLOUD, CLASS_NAME, GT, OUT_DIR).processar()
