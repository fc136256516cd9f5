"""
Exportação das estimativas de pose: registros JSON, tabela de poses e
malhas/keypoints para visualizadores externos.
"""

from __future__ import annotations

import json
import logging
import os

import pandas as pd

from geometry.mesh_io import write_obj, write_ply
from geometry.pointcloud import RigidTransform
from inference.pipeline import PoseEstimate
from tools.errors import DataError
from tools.tools import TableFile, atomic_write_json

logger = logging.getLogger(__name__)


def export_estimates(
    estimates: list[PoseEstimate],
    out_dir: str,
    class_names: list[str] | None = None,
    write_meshes: bool = True,
) -> str:
    """Grava poses.json, poses.csv e, opcionalmente, OBJ/PLY por quadro."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    rows = []
    for k, estimate in enumerate(estimates):
        frame = estimate.frame_index if estimate.frame_index is not None else k
        record = estimate.as_record()
        record["frame"] = frame
        if class_names is not None:
            record["class_name"] = class_names[estimate.class_used]
        records.append(record)
        rows.append(
            {"frame": frame, "class_id": estimate.class_used}
            | {f"r{i}{j}": estimate.transform.R[i, j] for i in range(3) for j in range(3)}
            | {f"t{a}": estimate.transform.t[n] for n, a in enumerate("xyz")}
        )
        if write_meshes:
            write_obj(os.path.join(out_dir, f"frame_{frame:04d}_object.obj"), estimate.posed_template)
            write_ply(os.path.join(out_dir, f"frame_{frame:04d}_keypoints.ply"), estimate.posed_keypoints)

    path = os.path.join(out_dir, "poses.json")
    atomic_write_json(path, records)
    TableFile(os.path.join(out_dir, "poses.csv")).salvar_dados(pd.DataFrame(rows))
    logger.info("%d estimativas exportadas para %s", len(records), out_dir)
    return path


def load_pose_record(path: str, frame: int | None = None) -> tuple[RigidTransform, int | None]:
    """
    Lê uma pose verdadeira de um JSON: um registro único {R, t, class_id} ou
    uma lista de registros (escolhe `frame`, ou o primeiro).
    """
    if not os.path.exists(path):
        raise DataError(f"Arquivo não encontrado: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"JSON inválido em {path}: {e}") from e
    if isinstance(payload, list):
        if not payload:
            raise DataError(f"Nenhum registro de pose em {path}")
        chosen = payload[0]
        if frame is not None:
            matches = [r for r in payload if r.get("frame") == frame]
            if not matches:
                raise DataError(f"Quadro {frame} não encontrado em {path}")
            chosen = matches[0]
        payload = chosen
    class_id = payload.get("class_id")
    return RigidTransform.from_record(payload), None if class_id is None else int(class_id)
