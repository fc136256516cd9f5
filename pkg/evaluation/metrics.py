"""
Avaliação: E_c, E_v2v, Chamfer, acurácia e matriz de confusão.

Modos:
    given-class      classe verdadeira informada; E_c e E_v2v (mesma malha,
                     vértices correspondentes);
    predicted-class  classe prevista; E_c, Chamfer e acurácia.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from rich.table import Table
from scipy import stats

from evaluation.samples import EvalSample, Prediction, Predictor
from geometry.kernels import chamfer_distance, v2v_error
from inference.smoothing import vote_class
from popup.templates import ObjectTemplate
from tools.errors import ConfigError, DataError
from tools.tools import TableFile, atomic_write_json

logger = logging.getLogger(__name__)

MODES = ("given-class", "predicted-class")


def confusion_matrix(pairs, num_classes: int, normalize: bool = False) -> np.ndarray:
    """Linhas = classe verdadeira, colunas = prevista."""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    for gt, pred in pairs:
        if not (0 <= gt < num_classes and 0 <= pred < num_classes):
            raise ConfigError(f"par de classes fora do intervalo: ({gt}, {pred})")
        matrix[gt, pred] += 1
    if not normalize:
        return matrix
    rows = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, rows, out=np.zeros(matrix.shape), where=rows > 0)


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values) if values else float("nan")


@dataclass
class MetricsReport:
    mode: str
    e_c: float
    e_v2v: float
    e_ch: float
    accuracy: float
    confusion: np.ndarray
    sample_count: int
    skipped: int
    class_names: list[str] = field(default_factory=list)
    per_sample: pd.DataFrame = field(default_factory=pd.DataFrame)
    name: str = "popup"
    sequence_accuracy: float = float("nan")

    def summary(self) -> dict:
        def clean(x: float):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "name": self.name,
            "mode": self.mode,
            "E_c": clean(self.e_c),
            "E_v2v": clean(self.e_v2v),
            "E_ch": clean(self.e_ch),
            "accuracy": clean(self.accuracy),
            "sequence_accuracy": clean(self.sequence_accuracy),
            "samples": self.sample_count,
            "skipped": self.skipped,
            "confusion": self.confusion.tolist(),
            "class_names": list(self.class_names),
        }

    def to_table(self) -> Table:
        table = Table(title=f"Métricas ({self.name}, {self.mode})")
        table.add_column("Métrica", style="cyan")
        table.add_column("Valor", justify="right")
        for label, value in (("E_c (m)", self.e_c), ("E_v2v (m)", self.e_v2v), ("E_ch (m)", self.e_ch)):
            if not math.isnan(value):
                table.add_row(label, f"{value:.4f}")
        if not math.isnan(self.accuracy):
            table.add_row("Acurácia (%)", f"{self.accuracy:.2f}")
        if not math.isnan(self.sequence_accuracy):
            table.add_row("Acurácia por sequência (%)", f"{self.sequence_accuracy:.2f}")
        table.add_row("Amostras", str(self.sample_count))
        table.add_row("Ignoradas", str(self.skipped))
        return table

    def save(self, out_dir: str) -> str:
        """report.json, per_sample.csv e confusion.csv em `out_dir`."""
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"report_{self.name}.json")
        atomic_write_json(path, self.summary())
        TableFile(os.path.join(out_dir, f"per_sample_{self.name}.csv")).salvar_dados(self.per_sample)
        labels = self.class_names or [str(i) for i in range(len(self.confusion))]
        confusion = pd.DataFrame(self.confusion, index=labels, columns=labels)
        confusion.index.name = "gt"
        TableFile(os.path.join(out_dir, f"confusion_{self.name}.csv")).salvar_dados(confusion, index=True)
        return path


def evaluate(
    samples: Sequence[EvalSample],
    predictor: Predictor,
    mode: str,
    templates: list[ObjectTemplate],
    name: str = "popup",
    vote_rule: str = "majority",
) -> MetricsReport:
    if mode not in MODES:
        raise ConfigError(f"modo de avaliação desconhecido: {mode}")
    by_class = {t.class_id: t for t in templates}
    num_classes = len(templates)

    rows = []
    skipped = 0
    for sample in samples:
        if sample.gt_transform is None:
            skipped += 1
            logger.warning("Amostra %s/%d sem verdade de campo; ignorada", sample.sequence_id, sample.frame_index)
            continue
        pred = predictor(sample, mode)
        gt_vertices = by_class[sample.class_id].mesh.transformed(sample.gt_transform).vertices
        row = {
            "sequence_id": sample.sequence_id,
            "frame_index": sample.frame_index,
            "gt_class": sample.class_id,
            "pred_class": pred.class_id,
            "e_c": v2v_error(pred.center, sample.gt_center),
            "e_v2v": float("nan"),
            "e_ch": float("nan"),
        }
        if mode == "given-class":
            row["e_v2v"] = v2v_error(pred.vertices, gt_vertices)
        else:
            row["e_ch"] = chamfer_distance(pred.vertices, gt_vertices)
        if pred.class_distribution is not None:
            row |= {f"p_{c}": float(p) for c, p in enumerate(pred.class_distribution)}
        rows.append(row)

    if not rows:
        raise DataError("nenhuma amostra com verdade de campo para avaliar")
    per_sample = pd.DataFrame(rows).sort_values(["sequence_id", "frame_index"], kind="stable").reset_index(drop=True)
    confusion = confusion_matrix(zip(per_sample["gt_class"], per_sample["pred_class"]), num_classes)
    accuracy = float("nan")
    if mode == "predicted-class":
        accuracy = 100.0 * np.trace(confusion) / confusion.sum()

    report = MetricsReport(
        mode=mode,
        e_c=_mean(sorted(per_sample["e_c"].tolist())),
        e_v2v=_mean(sorted(per_sample["e_v2v"].tolist())) if mode == "given-class" else float("nan"),
        e_ch=_mean(sorted(per_sample["e_ch"].tolist())) if mode == "predicted-class" else float("nan"),
        accuracy=accuracy,
        confusion=confusion,
        sample_count=len(per_sample),
        skipped=skipped,
        class_names=[t.name for t in templates],
        per_sample=per_sample,
        name=name,
    )
    if mode == "predicted-class":
        report.sequence_accuracy = sequence_accuracy(per_sample, num_classes, vote_rule)
    logger.info("Avaliação %s (%s): E_c=%.4f em %d amostras", name, mode, report.e_c, report.sample_count)
    return report


def paired_significance(a: MetricsReport, b: MetricsReport, metric: str = "e_c") -> tuple[float, float]:
    """Wilcoxon pareado sobre os erros por amostra de dois relatórios."""
    keys = ["sequence_id", "frame_index"]
    merged = a.per_sample[keys + [metric]].merge(b.per_sample[keys + [metric]], on=keys, suffixes=("_a", "_b"))
    if len(merged) != len(a.per_sample) or len(merged) != len(b.per_sample):
        raise DataError("relatórios avaliados sobre amostras diferentes")
    result = stats.wilcoxon(merged[f"{metric}_a"], merged[f"{metric}_b"])
    return float(result.statistic), float(result.pvalue)


def sequence_accuracy(per_sample: pd.DataFrame, num_classes: int, rule: str = "majority") -> float:
    """
    Acurácia com uma classe por sequência, obtida por voto sobre as
    distribuições por quadro (colunas p_0..p_{C-1}). Sem essas colunas, cada
    quadro vota com um one-hot da classe prevista.
    """
    columns = [f"p_{c}" for c in range(num_classes)]
    hits = []
    for _, group in per_sample.groupby("sequence_id", sort=True):
        if all(c in group.columns for c in columns) and not group[columns].isna().any().any():
            distributions = list(group[columns].to_numpy(dtype=np.float64))
        else:
            distributions = list(np.eye(num_classes)[group["pred_class"].to_numpy(dtype=np.int64)])
        voted = vote_class(distributions, rule)
        hits.append(voted == int(group["gt_class"].iloc[0]))
    return 100.0 * float(np.mean(hits)) if hits else float("nan")
