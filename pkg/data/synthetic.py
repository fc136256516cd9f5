"""
Gerador de dados sintéticos: uma figura articulada (esqueleto com cascas
gaussianas de pontos em cada membro) interagindo com um objeto.

Cada classe de objeto impõe uma postura característica:
    ball   segurada na palma da mão direita, braço à frente;
    stick  segurado no punho direito fechado, braço para baixo;
    board  segurada com as duas mãos afastadas;
    box    usada como assento, mãos sobre os joelhos.

A amostragem dos pontos sobre os membros (segmento, posição ao longo do
osso, ângulo e raio) é sorteada uma única vez por dataset, então o ponto i
de qualquer quadro está sempre na mesma região do corpo.

Saída em disco:
    manifest.json
    templates/<classe>.obj, templates/<classe>_keypoints.npy
    sequences/seq_XXXX.npy        (quadros, N, 3) float32
    sequences/seq_XXXX_poses.csv  pose verdadeira por quadro
    sequences/seq_XXXX/frame_XXXX.ply (opcional)
    sequences/seq_XXXX_raw.npy    varredura densa com ruído do quadro 0 (opcional)
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from geometry.mesh_io import write_obj, write_ply
from geometry.pointcloud import RigidTransform
from popup.templates import build_templates
from tools.config import DataConfig
from tools.errors import ConfigError
from tools.tools import TableFile, atomic_write_bytes, atomic_write_json, sha256_file

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
UP = np.array([0.0, 0.0, 1.0])


# ============================================================
# Posturas por classe
# ============================================================


@dataclass(frozen=True)
class ClassPrior:
    """Ângulos em graus: (yaw do ombro, pitch do ombro, yaw do cotovelo, pitch do cotovelo)."""

    mode: str
    seated: bool
    right_arm: tuple[float, float, float, float]
    left_arm: tuple[float, float, float, float]
    curl: tuple[float, float]
    head_pitch: float
    anchor: str
    palm_offset: float = 0.0


CLASS_PRIORS = {
    "ball": ClassPrior("hand_held", False, (-10, -45, 0, -5), (8, -85, 0, -80), (0.3, 0.9), -20, "right_palm", 0.11),
    "stick": ClassPrior("hand_held", False, (-15, -75, 0, -45), (8, -85, 0, -80), (0.3, 1.4), 0, "right_fist"),
    "board": ClassPrior("two_handed", False, (-60, -10, -30, -5), (60, -10, 30, -5), (0.1, 0.1), -5, "both_hands"),
    "box": ClassPrior("seated_on", True, (-5, -60, 0, -25), (5, -60, 0, -25), (0.5, 0.5), -10, "seat"),
}

_PRIOR_CYCLE = ("ball", "board", "box", "stick")


def class_prior(name: str, index: int) -> ClassPrior:
    """Classes sem postura própria herdam uma postura com ângulos deslocados pelo nome."""
    if name in CLASS_PRIORS:
        return CLASS_PRIORS[name]
    base = CLASS_PRIORS[_PRIOR_CYCLE[index % len(_PRIOR_CYCLE)]]
    digest = np.frombuffer(hashlib.sha256(name.encode("utf-8")).digest()[:8], dtype=np.uint8)
    shift = (digest.astype(np.float64) / 255.0 - 0.5) * 40.0
    right = tuple(float(a + s) for a, s in zip(base.right_arm, shift[:4]))
    left = tuple(float(a + s) for a, s in zip(base.left_arm, shift[4:]))
    return ClassPrior(base.mode, base.seated, right, left, base.curl, base.head_pitch, base.anchor, base.palm_offset)


# ============================================================
# Esqueleto
# ============================================================


def direction(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    yaw, pitch = np.deg2rad(yaw_deg), np.deg2rad(pitch_deg)
    return np.array([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _hand_frame(forearm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(eixo lateral, normal da palma) para um antebraço."""
    lateral = np.cross(forearm, UP)
    if np.linalg.norm(lateral) < 1e-6:
        lateral = np.array([0.0, 1.0, 0.0])
    lateral = _unit(lateral)
    return lateral, np.cross(lateral, forearm)


def _rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    return Rotation.from_rotvec(axis * angle).apply(v)


def figure_joints(arms: np.ndarray, curls: np.ndarray, head_pitch: float, seated: bool) -> dict[str, np.ndarray]:
    """
    Articulações no referencial do corpo (x à frente, y à esquerda, z para
    cima, escala 1). `arms` é (2, 4) com as linhas [direito, esquerdo].
    """
    j: dict[str, np.ndarray] = {}
    j["pelvis"] = np.array([0.0, 0.0, 0.50 if seated else 0.95])
    j["neck"] = j["pelvis"] + [0.0, 0.0, 0.55]
    j["head_top"] = j["neck"] + 0.25 * direction(0.0, 90.0 + head_pitch)
    for side, sign, row in (("r", -1.0, 0), ("l", 1.0, 1)):
        sy, sp, ey, ep = arms[row]
        j[f"shoulder_{side}"] = j["neck"] + [0.0, sign * 0.19, -0.03]
        j[f"elbow_{side}"] = j[f"shoulder_{side}"] + 0.30 * direction(sy, sp)
        forearm = direction(ey, ep)
        j[f"wrist_{side}"] = j[f"elbow_{side}"] + 0.27 * forearm
        j[f"hand_tip_{side}"] = j[f"wrist_{side}"] + 0.09 * forearm
        lateral, _ = _hand_frame(forearm)
        curl = curls[row]
        j[f"finger_mid_{side}"] = j[f"hand_tip_{side}"] + 0.045 * _rotate(forearm, lateral, curl)
        j[f"finger_tip_{side}"] = j[f"finger_mid_{side}"] + 0.035 * _rotate(forearm, lateral, 2.0 * curl)

        j[f"hip_{side}"] = j["pelvis"] + [0.0, sign * 0.10, 0.0]
        if seated:
            j[f"knee_{side}"] = j[f"hip_{side}"] + [0.45, 0.0, 0.0]
        else:
            j[f"knee_{side}"] = j[f"hip_{side}"] + [0.0, 0.0, -0.45]
        j[f"ankle_{side}"] = j[f"knee_{side}"] + [0.0, 0.0, -0.45]
        j[f"toe_{side}"] = j[f"ankle_{side}"] + [0.18, 0.0, 0.0]
    return j


# (nome, articulação inicial, final, raio, peso na contagem de pontos)
SEGMENTS = [
    ("pelvis_bar", "hip_l", "hip_r", 0.09, 1.0),
    ("torso", "pelvis", "neck", 0.14, 4.0),
    ("shoulder_bar", "shoulder_l", "shoulder_r", 0.06, 1.0),
    ("head", "neck", "head_top", 0.09, 1.5),
]
for _side in ("r", "l"):
    SEGMENTS += [
        (f"upper_arm_{_side}", f"shoulder_{_side}", f"elbow_{_side}", 0.045, 1.0),
        (f"forearm_{_side}", f"elbow_{_side}", f"wrist_{_side}", 0.038, 0.9),
        (f"hand_{_side}", f"wrist_{_side}", f"hand_tip_{_side}", 0.030, 0.8),
        (f"finger_a_{_side}", f"hand_tip_{_side}", f"finger_mid_{_side}", 0.015, 0.5),
        (f"finger_b_{_side}", f"finger_mid_{_side}", f"finger_tip_{_side}", 0.012, 0.4),
        (f"thigh_{_side}", f"hip_{_side}", f"knee_{_side}", 0.070, 1.6),
        (f"shin_{_side}", f"knee_{_side}", f"ankle_{_side}", 0.050, 1.3),
        (f"foot_{_side}", f"ankle_{_side}", f"toe_{_side}", 0.040, 0.5),
    ]
HAND_SEGMENTS = {name for name, *_ in SEGMENTS if name.startswith(("hand_", "finger_"))}


@dataclass(frozen=True)
class SampleLayout:
    """Parâmetros fixos de amostragem: um registro por ponto."""

    segment: np.ndarray
    along: np.ndarray
    angle: np.ndarray
    radial: np.ndarray
    segments: tuple

    def __len__(self) -> int:
        return len(self.segment)


def _allocate(weights: np.ndarray, n: int) -> np.ndarray:
    """Contagens inteiras proporcionais que somam n (maiores restos primeiro)."""
    exact = weights / weights.sum() * n
    counts = np.floor(exact).astype(np.int64)
    remainder = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def build_layout(n_points: int, rng: np.random.Generator, variant: str = "full") -> SampleLayout:
    segments = tuple(s for s in SEGMENTS if variant != "hands" or s[0] in HAND_SEGMENTS)
    counts = _allocate(np.array([s[4] for s in segments]), n_points)
    segment = np.repeat(np.arange(len(segments)), counts)
    return SampleLayout(
        segment=segment,
        along=rng.random(n_points),
        angle=rng.uniform(0.0, 2.0 * np.pi, n_points),
        radial=np.clip(1.0 + 0.1 * rng.standard_normal(n_points), 0.5, 1.5),
        segments=segments,
    )


def render_figure(joints: dict[str, np.ndarray], layout: SampleLayout, scale: float = 1.0) -> np.ndarray:
    """Pontos (N, 3) da figura para articulações já em coordenadas do mundo."""
    starts = np.array([joints[s[1]] for s in layout.segments])
    ends = np.array([joints[s[2]] for s in layout.segments])
    radii = np.array([s[3] for s in layout.segments]) * scale

    a = starts[layout.segment]
    d = ends[layout.segment] - a
    axis = d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    ref = np.where(np.abs(axis[:, 2:3]) > 0.9, [[1.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axis, e1)
    ring = np.cos(layout.angle)[:, None] * e1 + np.sin(layout.angle)[:, None] * e2
    return a + layout.along[:, None] * d + (radii[layout.segment] * layout.radial)[:, None] * ring


# ============================================================
# Sequências e cenas
# ============================================================


@dataclass(frozen=True)
class SequenceParams:
    sequence_id: str
    class_id: int
    class_name: str
    prior: ClassPrior
    root: np.ndarray
    yaw: float
    scale: float
    arm_jitter: np.ndarray
    phases: np.ndarray
    frequency: float
    object_offset: np.ndarray
    object_jitter: np.ndarray
    offset_wobble: np.ndarray


@dataclass
class SyntheticScene:
    cloud: np.ndarray
    class_id: int
    class_name: str
    transform: RigidTransform
    mode: str
    anchor: np.ndarray
    joints: dict[str, np.ndarray]
    scale: float
    sequence_id: str
    frame_index: int


def sample_sequence_params(
    index: int, class_id: int, class_name: str, seed: int, interaction_distance: float
) -> SequenceParams:
    rng = np.random.default_rng([seed, 1, index])
    direction_vec = _unit(rng.standard_normal(3))
    return SequenceParams(
        sequence_id=f"seq_{index:04d}",
        class_id=class_id,
        class_name=class_name,
        prior=class_prior(class_name, class_id),
        root=np.append(rng.uniform(-0.5, 0.5, 2), 0.0),
        yaw=float(rng.uniform(-np.pi, np.pi)),
        scale=float(rng.uniform(0.9, 1.1)),
        arm_jitter=rng.normal(0.0, 6.0, (2, 4)),
        phases=rng.uniform(0.0, 2.0 * np.pi, 4),
        frequency=float(rng.uniform(0.2, 0.4)),
        object_offset=direction_vec * rng.uniform(0.0, 0.6 * interaction_distance),
        object_jitter=Rotation.from_rotvec(_unit(rng.standard_normal(3)) * np.deg2rad(rng.uniform(0, 8))).as_matrix(),
        offset_wobble=_unit(rng.standard_normal(3)) * 0.3 * interaction_distance,
    )


def _object_rotation(prior: ClassPrior, joints: dict[str, np.ndarray], body_yaw: np.ndarray) -> np.ndarray:
    forward = body_yaw @ np.array([1.0, 0.0, 0.0])
    if prior.anchor == "right_fist":
        z = _unit(UP + 0.3 * forward)
        y = _unit(np.cross(z, forward))
        return np.column_stack([np.cross(y, z), y, z])
    if prior.anchor == "both_hands":
        x = _unit(joints["hand_tip_l"] - joints["hand_tip_r"])
        z = _unit(UP - np.dot(UP, x) * x)
        y = np.cross(z, x)
        return np.column_stack([x, y, z])
    return body_yaw


def generate_scene(params: SequenceParams, frame_index: int, fps: float, layout: SampleLayout, variant: str) -> SyntheticScene:
    prior = params.prior
    t = frame_index / fps
    wave = np.sin(2.0 * np.pi * params.frequency * t + params.phases)

    arms = np.array([prior.right_arm, prior.left_arm], dtype=np.float64) + params.arm_jitter
    arms[:, 0] += 6.0 * wave[0]
    arms[:, 1] += 8.0 * wave[1]
    arms[:, 3] += 6.0 * wave[2]
    curls = np.clip(np.array(prior.curl) + 0.1 * wave[3], 0.0, 1.5)
    if variant == "rest_hands":
        curls = np.array([0.3, 0.3])

    body = figure_joints(arms, curls, prior.head_pitch, prior.seated)
    body_yaw = Rotation.from_rotvec(UP * params.yaw).as_matrix()
    root = params.root + np.array([0.02 * np.sin(np.pi * params.frequency * t + params.phases[0]), 0.0, 0.0])
    joints = {name: body_yaw @ (params.scale * p) + root for name, p in body.items()}

    hand_r = 0.5 * (joints["wrist_r"] + joints["hand_tip_r"])
    hand_l = 0.5 * (joints["wrist_l"] + joints["hand_tip_l"])
    if prior.anchor == "right_palm":
        _, normal = _hand_frame(_unit(joints["hand_tip_r"] - joints["wrist_r"]))
        anchor = hand_r + prior.palm_offset * params.scale * normal
    elif prior.anchor == "right_fist":
        anchor = hand_r
    elif prior.anchor == "both_hands":
        anchor = 0.5 * (hand_r + hand_l)
    else:
        anchor = joints["pelvis"] - np.array([0.0, 0.0, 0.30 * params.scale])

    center = anchor + params.object_offset + params.offset_wobble * np.sin(2.0 * np.pi * params.frequency * t)
    rotation = _object_rotation(prior, joints, body_yaw) @ params.object_jitter
    cloud = render_figure(joints, layout, params.scale)
    return SyntheticScene(
        cloud=cloud,
        class_id=params.class_id,
        class_name=params.class_name,
        transform=RigidTransform(rotation, center),
        mode=prior.mode,
        anchor=anchor,
        joints=joints,
        scale=params.scale,
        sequence_id=params.sequence_id,
        frame_index=frame_index,
    )


def render_raw_scan(
    scene: SyntheticScene, n_points: int, noise: float, seed: int | list[int], variant: str = "full"
) -> np.ndarray:
    """Nova amostragem densa da mesma figura, com ruído gaussiano e ordem embaralhada."""
    rng = np.random.default_rng(seed)
    layout = build_layout(n_points, rng, variant)
    points = render_figure(scene.joints, layout, scene.scale)
    points = points + rng.normal(0.0, noise, points.shape)
    return points[rng.permutation(n_points)]


# ============================================================
# Dataset em disco
# ============================================================


def _stratified_splits(class_of: list[int], config: DataConfig, seed: int) -> dict[str, list[str]]:
    rng = np.random.default_rng([seed, 2])
    splits: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    for class_id in sorted(set(class_of)):
        members = [i for i, c in enumerate(class_of) if c == class_id]
        members = [members[k] for k in rng.permutation(len(members))]
        n_test = int(round(config.test_fraction * len(members)))
        n_val = int(round(config.val_fraction * len(members)))
        while len(members) - n_test - n_val < 1 and (n_test or n_val):
            if n_val >= n_test and n_val:
                n_val -= 1
            else:
                n_test -= 1
        splits["test"] += [f"seq_{i:04d}" for i in members[:n_test]]
        splits["val"] += [f"seq_{i:04d}" for i in members[n_test: n_test + n_val]]
        splits["train"] += [f"seq_{i:04d}" for i in members[n_test + n_val:]]
    return {name: sorted(ids) for name, ids in splits.items()}


def _save_npy(path: str, array: np.ndarray) -> None:
    buffer = io.BytesIO()
    np.save(buffer, array, allow_pickle=False)
    atomic_write_bytes(path, buffer.getvalue())


def pose_table(scenes: list[SyntheticScene]) -> pd.DataFrame:
    rows = []
    for scene in scenes:
        R, t = scene.transform.R, scene.transform.t
        row = {"frame": scene.frame_index, "class_id": scene.class_id}
        row |= {f"r{i}{j}": R[i, j] for i in range(3) for j in range(3)}
        row |= {"tx": t[0], "ty": t[1], "tz": t[2]}
        row |= {"anchor_x": scene.anchor[0], "anchor_y": scene.anchor[1], "anchor_z": scene.anchor[2]}
        rows.append(row)
    return pd.DataFrame(rows)


def _write_sequence(
    params: SequenceParams, layout: SampleLayout, config: DataConfig, out_dir: str, raw_seed: list[int]
) -> tuple[dict, list[str]]:
    scenes = [generate_scene(params, f, config.fps, layout, config.input_variant) for f in range(config.frames)]
    clouds_rel = f"sequences/{params.sequence_id}.npy"
    poses_rel = f"sequences/{params.sequence_id}_poses.csv"
    _save_npy(os.path.join(out_dir, clouds_rel), np.stack([s.cloud for s in scenes]).astype(np.float32))
    TableFile(os.path.join(out_dir, poses_rel)).salvar_dados(pose_table(scenes))
    files = [clouds_rel, poses_rel]
    if config.write_ply:
        for scene in scenes:
            ply_rel = f"sequences/{params.sequence_id}/frame_{scene.frame_index:04d}.ply"
            write_ply(os.path.join(out_dir, ply_rel), scene.cloud.astype(np.float32).astype(np.float64))
            files.append(ply_rel)
    raw_rel = None
    if config.raw_scans:
        raw_rel = f"sequences/{params.sequence_id}_raw.npy"
        raw = render_raw_scan(scenes[0], config.raw_points, config.raw_noise, raw_seed, config.input_variant)
        _save_npy(os.path.join(out_dir, raw_rel), raw.astype(np.float32))
        files.append(raw_rel)
    logger.info("Sequência %s (%s) gerada", params.sequence_id, params.class_name)
    entry = {
        "id": params.sequence_id,
        "class_id": params.class_id,
        "class_name": params.class_name,
        "mode": params.prior.mode,
        "frames": config.frames,
        "clouds": clouds_rel,
        "poses": poses_rel,
    }
    if raw_rel is not None:
        entry["raw_scan"] = raw_rel
    return entry, files


def generate_synthetic(config: DataConfig, out_dir: str, seed: int | None = None) -> str:
    """Gera o dataset completo em `out_dir` e devolve o caminho do manifesto."""
    seed = config.seed if seed is None else seed
    priors = [class_prior(name, i) for i, name in enumerate(config.classes)]
    if len({p.mode for p in priors}) < 2:
        raise ConfigError("o gerador precisa de pelo menos 2 modos de interação entre as classes")

    os.makedirs(os.path.join(out_dir, "templates"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "sequences"), exist_ok=True)
    files: list[str] = []

    templates = build_templates(config.classes, config.num_keypoints, config.template_seed)
    for template in templates:
        obj_rel = f"templates/{template.name}.obj"
        kp_rel = f"templates/{template.name}_keypoints.npy"
        write_obj(os.path.join(out_dir, obj_rel), template.mesh)
        _save_npy(os.path.join(out_dir, kp_rel), template.keypoints)
        files += [obj_rel, kp_rel]

    layout = build_layout(config.points, np.random.default_rng([seed, 0]), config.input_variant)
    class_of = [i % len(config.classes) for i in range(config.sequences)]
    jobs = [
        sample_sequence_params(index, class_id, config.classes[class_id], seed, config.interaction_distance)
        for index, class_id in enumerate(class_of)
    ]
    # Cada sequência tem o próprio fluxo aleatório; a ordem de execução não altera a saída.
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(
            pool.map(
                lambda job: _write_sequence(job[1], layout, config, out_dir, [seed, 3, job[0]]),
                enumerate(jobs),
            )
        )
    sequences = [entry for entry, _ in results]
    for _, written in results:
        files += written

    manifest = {
        "version": MANIFEST_VERSION,
        "classes": list(config.classes),
        "splits": _stratified_splits(class_of, config, seed),
        "seed": seed,
        "template_seed": config.template_seed,
        "fps": config.fps,
        "points": config.points,
        "frames": config.frames,
        "num_keypoints": config.num_keypoints,
        "input_variant": config.input_variant,
        "interaction_distance": config.interaction_distance,
        "sequences": sequences,
        "files": {rel: sha256_file(os.path.join(out_dir, rel)) for rel in files},
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_json(path, manifest)
    logger.info("Dataset sintético com %d sequências salvo em %s", len(sequences), out_dir)
    return path
