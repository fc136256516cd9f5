"""
Processo de avaliação de um checkpoint (e, opcionalmente, do baseline NN)
sobre um split do dataset.

Uso:
    python3 -m process.evaluate
    (ou `python3 main.py eval --checkpoint runs/popup/checkpoint.npz --data datasets/synthetic --mode given-class --baseline nn`)

Saídas em OUT_DIR: report_<nome>.json, per_sample_<nome>.csv,
confusion_<nome>.csv e, com baseline, significance.json (Wilcoxon pareado).
"""

import logging
import os

from rich.console import Console

from data.dataset import load_dataset
from evaluation.baseline import NearestNeighborPredictor
from evaluation.metrics import MetricsReport, evaluate, paired_significance
from inference.pipeline import PopupPredictor
from popup.model import load_network
from tools.config import PopupConfig, load_config
from tools.errors import ConfigError, DataError
from tools.logs import configure_logging
from tools.tools import atomic_write_json

logger = logging.getLogger(__name__)
console = Console()


class EvaluateProcessor:
    def __init__(
        self,
        config: PopupConfig,
        data_dir: str,
        out_dir: str,
        mode: str = "given-class",
        checkpoint: str | None = None,
        split: str = "test",
        baseline: str | None = None,
    ):
        if checkpoint is None and baseline is None:
            raise ConfigError("informe --checkpoint, --baseline nn ou ambos")
        if baseline not in (None, "nn"):
            raise ConfigError(f"baseline desconhecido: {baseline}")
        self.config = config
        self.data_dir = data_dir
        self.out_dir = out_dir
        self.mode = mode
        self.checkpoint = checkpoint
        self.split = split
        self.baseline = baseline

    def processar(self) -> dict[str, MetricsReport]:
        dataset = load_dataset(self.data_dir)
        samples = dataset.eval_samples(self.split)
        logger.info("Avaliando %d quadros do split '%s' (%s)", len(samples), self.split, self.mode)
        vote_rule = self.config.inference.vote_rule
        reports: dict[str, MetricsReport] = {}

        if self.checkpoint is not None:
            net, templates, _ = load_network(self.checkpoint)
            if [t.name for t in templates] != dataset.classes:
                raise DataError(f"classes do checkpoint {self.checkpoint} diferem das do dataset")
            reports["popup"] = evaluate(
                samples, PopupPredictor(net, templates), self.mode, dataset.templates, "popup", vote_rule
            )
        if self.baseline == "nn":
            bank = dataset.train_bank()
            reports["nn"] = evaluate(
                samples, NearestNeighborPredictor(bank), self.mode, dataset.templates, "nn", vote_rule
            )

        for report in reports.values():
            report.save(self.out_dir)
            console.print(report.to_table())

        if len(reports) == 2:
            metric = "e_v2v" if self.mode == "given-class" else "e_ch"
            significance = {}
            for name in ("e_c", metric):
                try:
                    statistic, pvalue = paired_significance(reports["popup"], reports["nn"], name)
                except ValueError as e:
                    logger.warning("Teste de Wilcoxon não aplicável a %s: %s", name, e)
                    continue
                significance[name] = {"statistic": statistic, "pvalue": pvalue}
            atomic_write_json(os.path.join(self.out_dir, "significance.json"), significance)
        logger.info("✅ Relatórios salvos em %s", self.out_dir)
        return reports


if __name__ == "__main__":
    configure_logging()

    # MODIFICAR
    CHECKPOINT = "runs/popup/checkpoint.npz"
    DATA_DIR = "datasets/synthetic"
    MODE = "given-class"  # ou "predicted-class"
    OUT_DIR = "runs/popup/evaluation"

    # NÃO MODIFICAR
    config = load_config(".env" if os.path.exists(".env") else None)
    EvaluateProcessor(config, DATA_DIR, OUT_DIR, MODE, CHECKPOINT, baseline="nn").processar()
