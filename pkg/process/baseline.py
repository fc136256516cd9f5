"""
Processo do baseline de vizinho mais próximo: recupera o quadro de treino
mais parecido com a nuvem consultada e devolve a pose do objeto dele.

Uso:
    python3 -m process.baseline
    (ou `python3 main.py baseline --data datasets/synthetic --query frame.npy`)
"""

import logging
import os

from data.dataset import load_dataset
from evaluation.baseline import nn_retrieve
from geometry.mesh_io import load_point_cloud, write_obj
from tools.config import PopupConfig, load_config
from tools.logs import configure_logging
from tools.tools import ClassNameResolver, atomic_write_json

logger = logging.getLogger(__name__)


class BaselineProcessor:
    def __init__(
        self,
        config: PopupConfig,
        data_dir: str,
        query: str,
        out_dir: str,
        class_name: str | None = None,
    ):
        self.config = config
        self.data_dir = data_dir
        self.query = query
        self.out_dir = out_dir
        self.class_name = class_name

    def processar(self) -> dict:
        dataset = load_dataset(self.data_dir)
        class_filter = None
        if self.class_name is not None:
            class_filter = ClassNameResolver.resolve(self.class_name, dataset.classes)
        bank = dataset.train_bank()
        query = load_point_cloud(self.query)
        mesh, class_id, index = nn_retrieve(query.points, bank, class_filter)

        transform = bank.transforms[index]
        record = {
            "bank_index": index,
            "class_id": class_id,
            "class_name": dataset.classes[class_id],
        } | transform.as_record()
        os.makedirs(self.out_dir, exist_ok=True)
        write_obj(os.path.join(self.out_dir, "retrieved_object.obj"), mesh)
        atomic_write_json(os.path.join(self.out_dir, "retrieved_pose.json"), record)
        logger.info("✅ Vizinho mais próximo: entrada %d do banco (classe %s)", index, record["class_name"])
        return record


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    DATA_DIR = "datasets/synthetic"
    QUERY = "input/frame.npy"
    OUT_DIR = "runs/baseline"

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    BaselineProcessor(config, DATA_DIR, QUERY, OUT_DIR).processar()
