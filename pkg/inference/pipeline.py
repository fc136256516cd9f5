"""
Pop-up completo: rede + ajuste de template por Procrustes, para um quadro
ou para uma sequência com suavização temporal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from engine.tensor import no_grad, softmax
from evaluation.samples import EvalSample, Prediction
from geometry.kernels import procrustes_align
from geometry.pointcloud import Mesh, PointCloud, RigidTransform, as_points
from inference.smoothing import smooth_sequence, vote_class
from popup.model import PopupNetwork
from popup.templates import ObjectTemplate
from tools.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass
class PoseEstimate:
    center: np.ndarray
    offsets: np.ndarray
    transform: RigidTransform
    posed_template: Mesh
    posed_keypoints: np.ndarray
    class_used: int
    class_distribution: np.ndarray | None = None
    frame_index: int | None = None

    def as_record(self) -> dict:
        record = {
            "frame": self.frame_index,
            "class_id": self.class_used,
            "R": self.transform.R.reshape(-1).tolist(),
            "t": self.transform.t.tolist(),
            "center": self.center.tolist(),
            "unique": self.transform.unique,
        }
        if self.class_distribution is not None:
            record["class_distribution"] = self.class_distribution.tolist()
        return record


@dataclass
class FrameGroundTruth:
    transform: RigidTransform
    class_id: int


@dataclass
class FrameSequence:
    frames: list[tuple[PointCloud, FrameGroundTruth | None]]
    fps: float
    sequence_id: str = ""
    frame_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) < 1:
            raise DataError("FrameSequence precisa de pelo menos um quadro")
        if self.fps <= 0:
            raise DataError("fps deve ser > 0")
        if not self.frame_indices:
            self.frame_indices = list(range(len(self.frames)))

    def __len__(self) -> int:
        return len(self.frames)


def fit_template(canonical_keypoints, center, offsets, template: ObjectTemplate) -> tuple[RigidTransform, Mesh]:
    """Procrustes entre K e K + ô + d, aplicado à malha completa do template."""
    K = np.asarray(canonical_keypoints, dtype=np.float64)
    d = np.asarray(offsets, dtype=np.float64)
    if K.shape != d.shape:
        raise DataError(f"keypoints {K.shape} e offsets {d.shape} com formas diferentes")
    target = K + np.asarray(center, dtype=np.float64).reshape(1, 3) + d
    transform = procrustes_align(K, target)
    return transform, template.mesh.transformed(transform)


class PopupPredictor:
    """Rede treinada + templates; executa o pop-up quadro a quadro."""

    def __init__(self, net: PopupNetwork, templates: list[ObjectTemplate]):
        if len(templates) != net.config.num_classes:
            raise ConfigError(f"{len(templates)} templates para {net.config.num_classes} classes")
        self.net = net
        self.templates = {t.class_id: t for t in templates}

    def _keypoints_for(self, class_id: int | None) -> np.ndarray:
        # Com classe desconhecida, os keypoints do template 0 só alimentam a
        # cabeça de classe; o quadro é refeito com a classe prevista.
        return self.templates[0 if class_id is None else class_id].keypoints

    def popup_single(
        self,
        cloud,
        class_id: int | None = None,
        center_override: np.ndarray | None = None,
        frame_index: int | None = None,
    ) -> PoseEstimate:
        if class_id is not None and class_id not in self.templates:
            raise ConfigError(f"classe {class_id} inexistente")
        points = as_points(cloud)
        with no_grad():
            out = self.net.forward(points, self._keypoints_for(class_id), class_id, center_used=center_override)
            distribution = None
            if out.logits is not None:
                distribution = softmax(out.logits).data.copy()
            if class_id is None:
                class_id = out.class_id
                if class_id != 0:
                    out = self.net.forward(points, self.templates[class_id].keypoints, class_id, center_used=center_override)

        template = self.templates[class_id]
        K = template.keypoints
        if out.rotation is not None:
            transform = RigidTransform(out.rotation.data, out.center_used + out.translation.data)
            posed_template = template.mesh.transformed(transform)
        else:
            transform, posed_template = fit_template(K, out.center_used, out.offsets.data, template)
        return PoseEstimate(
            center=out.center_used.copy(),
            offsets=out.offsets.data.copy(),
            transform=transform,
            posed_template=posed_template,
            posed_keypoints=transform.apply(K),
            class_used=int(class_id),
            class_distribution=distribution,
            frame_index=frame_index,
        )

    def __call__(self, sample: EvalSample, mode: str) -> Prediction:
        """Adaptador para `evaluation.metrics.evaluate`."""
        class_id = sample.class_id if mode == "given-class" else None
        estimate = self.popup_single(sample.cloud, class_id, frame_index=sample.frame_index)
        return Prediction(
            center=estimate.transform.t.copy(),
            vertices=estimate.posed_template.vertices,
            class_id=estimate.class_used,
            class_distribution=estimate.class_distribution,
        )


def popup_single(cloud, class_id: int | None, net: PopupNetwork, templates: list[ObjectTemplate]) -> PoseEstimate:
    return PopupPredictor(net, templates).popup_single(cloud, class_id)


def popup_sequence(
    seq: FrameSequence,
    net: PopupNetwork,
    templates: list[ObjectTemplate],
    sigma: float,
    class_id: int | None = None,
    vote_rule: str = "majority",
) -> list[PoseEstimate]:
    """
    Pop-up por quadro, classe única por voto (quando não informada),
    suavização dos centros e novo decode em torno dos centros suavizados.
    """
    predictor = PopupPredictor(net, templates)
    first_pass = [
        predictor.popup_single(cloud, class_id, frame_index=i)
        for i, (cloud, _) in zip(seq.frame_indices, seq.frames)
    ]
    if class_id is None:
        distributions = [e.class_distribution for e in first_pass]
        if any(d is None for d in distributions):
            raise ConfigError("sem classe informada e sem cabeça de classe na rede")
        class_id = vote_class(distributions, vote_rule)
        logger.info("Classe da sequência por voto (%s): %d", vote_rule, class_id)

    smoothed = smooth_sequence([e.center for e in first_pass], sigma)
    estimates = []
    for k, (i, (cloud, _)) in enumerate(zip(seq.frame_indices, seq.frames)):
        estimate = predictor.popup_single(cloud, class_id, center_override=smoothed[k], frame_index=i)
        estimate.class_distribution = first_pass[k].class_distribution
        estimates.append(estimate)
    return estimates
