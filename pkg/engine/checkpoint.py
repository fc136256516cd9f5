"""
Checkpoint em um contêiner `.npz` com cabeçalho JSON versionado.

Chaves do arquivo:
    __header__        JSON (uint8) com versão, config, hash, metadados
    param/<nome>      parâmetros da rede
    adam_m/<nome>     primeiro momento do Adam
    adam_v/<nome>     segundo momento do Adam
    extra/<nome>      arrays auxiliares (ex.: templates embutidos)
"""

from __future__ import annotations

import io
import json
import logging
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np

from engine.optim import AdamState
from tools.errors import CheckpointError
from tools.tools import atomic_write_bytes

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    model_config: dict
    config_hash: str
    optimizer: AdamState | None = None
    metadata: dict = field(default_factory=dict)
    extras: dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Grava o checkpoint de forma atômica."""
    header = {
        "version": CHECKPOINT_VERSION,
        "model_config": checkpoint.model_config,
        "config_hash": checkpoint.config_hash,
        "metadata": checkpoint.metadata,
        "param_names": list(checkpoint.params),
        "optimizer": None,
    }
    arrays: dict[str, np.ndarray] = {}
    for name, value in checkpoint.params.items():
        arrays[f"param/{name}"] = np.asarray(value, dtype=np.float64)
    if checkpoint.optimizer is not None:
        state = checkpoint.optimizer
        header["optimizer"] = {
            "step": state.step,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
        }
        for name, value in state.first_moment.items():
            arrays[f"adam_m/{name}"] = value
        for name, value in state.second_moment.items():
            arrays[f"adam_v/{name}"] = value
    for name, value in checkpoint.extras.items():
        arrays[f"extra/{name}"] = np.asarray(value)
    arrays["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )

    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    atomic_write_bytes(path, buffer.getvalue())
    logger.debug("Checkpoint salvo em %s", path)


def load_checkpoint(path: str) -> Checkpoint:
    """Lê um checkpoint; erros de leitura viram CheckpointError com o caminho."""
    if not os.path.exists(path):
        raise CheckpointError(f"Checkpoint não encontrado: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {key: data[key] for key in data.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as e:
        raise CheckpointError(f"Checkpoint ilegível: {path} ({e})") from e

    if "__header__" not in arrays:
        raise CheckpointError(f"Checkpoint sem cabeçalho: {path}")
    try:
        header = json.loads(arrays.pop("__header__").tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cabeçalho corrompido em {path}") from e
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Versão de checkpoint não suportada em {path}: {header.get('version')}"
        )

    params = {name: arrays.get(f"param/{name}") for name in header["param_names"]}
    missing = [name for name, value in params.items() if value is None]
    if missing:
        raise CheckpointError(f"Parâmetros ausentes em {path}: {missing}")

    optimizer = None
    if header.get("optimizer") is not None:
        opt = header["optimizer"]
        optimizer = AdamState(
            step=int(opt["step"]),
            first_moment={k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")},
            second_moment={k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")},
            beta1=float(opt["beta1"]),
            beta2=float(opt["beta2"]),
            eps=float(opt["eps"]),
        )

    extras = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
    return Checkpoint(
        params=params,
        model_config=header["model_config"],
        config_hash=header["config_hash"],
        optimizer=optimizer,
        metadata=header.get("metadata", {}),
        extras=extras,
    )
