"""
Rede de pop-up de objetos.

Fluxo de uma nuvem humana P e uma classe c:
    1. encode_global(P) -> centro ô e feature global;
    2. keypoints canônicos K transladados para ô;
    3. vizinhança local = os `local_k` pontos de P mais próximos de ô;
    4. encode_local(K + ô, vizinhança) -> feature por keypoint;
    5. decode_offsets(...) -> deslocamento d por keypoint.

A cabeça de classe e a cabeça direta (R, t) são opcionais, ligadas pela
configuração da arquitetura.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from engine.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from engine.optim import AdamState
from engine.tensor import Tensor, as_tensor, concat, softmax
from geometry.kernels import canonical_order, knn_indices
from geometry.pointcloud import Mesh, as_points
from popup.layers import MLP, FeaturePropagation, GroupAll, SetAbstraction, posenc_dim, positional_encoding
from popup.templates import ClassEncoding, ObjectTemplate, one_hot
from tools.config import ModelConfig, config_hash, model_config_from_dict, model_config_to_dict
from tools.errors import CheckpointError, ConfigError, GeometryError

logger = logging.getLogger(__name__)

# Saída zero da cabeça direta -> colunas (1,0,0) e (0,1,0): rotação identidade.
_RT_BIAS = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0])


@dataclass
class PopupForward:
    center: Tensor
    f_global: Tensor
    f_local: Tensor | None
    center_used: np.ndarray
    keypoints_at_center: np.ndarray
    class_id: int
    logits: Tensor | None = None
    offsets: Tensor | None = None
    rotation: Tensor | None = None
    translation: Tensor | None = None

    @property
    def predicted_keypoints(self) -> Tensor:
        """K + ô + d."""
        return self.offsets + self.keypoints_at_center


def _as_cloud_tensor(cloud) -> Tensor:
    if isinstance(cloud, Tensor):
        return cloud
    return Tensor(as_points(cloud))


def _vector_norm(x: Tensor) -> Tensor:
    return (x * x).sum().sqrt()


def _cross(a: Tensor, b: Tensor) -> Tensor:
    return concat(
        [
            a[1:2] * b[2:3] - a[2:3] * b[1:2],
            a[2:3] * b[0:1] - a[0:1] * b[2:3],
            a[0:1] * b[1:2] - a[1:2] * b[0:1],
        ]
    )


def rotation_from_6d(raw: Tensor) -> Tensor:
    """Gram–Schmidt sobre duas colunas; devolve R (3, 3) com colunas b1, b2, b1×b2."""
    a1, a2 = raw[0:3], raw[3:6]
    b1 = a1 / _vector_norm(a1)
    u2 = a2 - (b1 * a2).sum() * b1
    b2 = u2 / _vector_norm(u2)
    b3 = _cross(b1, b2)
    return concat([b1.reshape(3, 1), b2.reshape(3, 1), b3.reshape(3, 1)], axis=1)


class PopupNetwork:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        c = config

        self.global_sa1 = SetAbstraction(
            c.global_sa1_npoint, c.global_sa1_nsample, 0, c.global_sa1_widths, rng, "global_sa1"
        )
        self.global_sa2 = SetAbstraction(
            c.global_sa2_npoint, c.global_sa2_nsample, self.global_sa1.out_dim,
            c.global_sa2_widths, rng, "global_sa2",
        )
        self.global_all = GroupAll(self.global_sa2.out_dim, c.global_widths, rng, "global_all")
        self.center_head = MLP(
            c.global_feature_dim, c.center_head_widths + (3,), rng, "center_head", final_activation=False
        )

        self.local_sa = None
        self.local_fp = None
        local_dim = 0
        if not c.no_local_features:
            self.local_sa = SetAbstraction(
                c.local_sa_npoint, c.local_sa_nsample, 1, c.local_sa_widths, rng, "local_sa"
            )
            self.local_fp = FeaturePropagation(
                3 + self.local_sa.out_dim, c.local_fp_widths, c.fp_neighbors, rng, "local_fp"
            )
            local_dim = c.local_feature_dim

        self.class_head = None
        if c.class_head:
            class_in = c.global_feature_dim
            if c.class_head_input == "global_local":
                if c.no_local_features:
                    raise ConfigError("cabeça de classe global_local exige features locais")
                class_in += local_dim
            self.class_head = MLP(
                class_in, c.class_head_widths + (c.num_classes,), rng, "class_head", final_activation=False
            )

        self.decoder = None
        self.rt_head = None
        hidden = (c.decoder_width,) * c.decoder_layers
        if c.direct_rt:
            self.rt_head = MLP(
                c.global_feature_dim + local_dim + c.num_classes, hidden + (9,), rng, "rt_head",
                final_activation=False,
            )
        else:
            self.decoder = MLP(
                posenc_dim(c.posenc_bands) + local_dim + c.global_feature_dim + c.num_classes,
                hidden + (3,), rng, "decoder", final_activation=False,
            )

    # ---------- parâmetros ----------

    def _modules(self):
        for name in ("global_sa1", "global_sa2", "global_all", "center_head", "local_sa",
                     "local_fp", "class_head", "decoder", "rt_head"):
            module = getattr(self, name)
            if module is not None:
                yield module

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for module in self._modules():
            params.update(module.parameters())
        return params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"parâmetros ausentes {missing}, inesperados {unexpected}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(f"parâmetro '{name}' com forma {value.shape}, esperado {p.shape}")
            p.data = value.copy()

    # ---------- codificadores ----------

    def encode_global(self, cloud) -> tuple[Tensor, Tensor]:
        """Centro ô (3,) e feature global; invariante à ordem dos pontos."""
        P = _as_cloud_tensor(cloud)
        if len(P) == 0:
            raise GeometryError("nuvem vazia")
        Pc = P.gather(canonical_order(P.data))
        xyz1, f1 = self.global_sa1(Pc, None)
        xyz2, f2 = self.global_sa2(xyz1, f1)
        f_global = self.global_all(xyz2, f2)
        center = self.center_head(f_global.reshape(1, -1)).reshape(3)
        return center, f_global

    def encode_local(self, keypoints_at_center, local_cloud) -> Tensor:
        """
        Feature por keypoint a partir da união [keypoints ‖ pontos locais],
        com uma flag 1/0 indicando a origem de cada ponto.
        """
        if self.local_sa is None:
            raise ConfigError("rede sem codificador local (no_local_features)")
        H = _as_cloud_tensor(local_cloud)
        if len(H) == 0:
            raise GeometryError("vizinhança local vazia")
        K = as_tensor(keypoints_at_center)
        Hc = H.gather(canonical_order(H.data))
        union = concat([K, Hc], axis=0)
        flags = Tensor(np.concatenate([np.ones(len(K)), np.zeros(len(Hc))]).reshape(-1, 1))
        sa_xyz, sa_features = self.local_sa(union, flags)
        skip = K - K.mean(axis=0, keepdims=True)
        return self.local_fp(K, sa_xyz, sa_features, skip)

    # ---------- cabeças ----------

    def _class_vector(self, class_id: int | ClassEncoding) -> np.ndarray:
        if isinstance(class_id, ClassEncoding):
            if len(class_id.one_hot) != self.config.num_classes:
                raise ConfigError("one-hot com número de classes diferente da rede")
            return class_id.one_hot
        return one_hot(class_id, self.config.num_classes).one_hot

    def decode_offsets(self, keypoints, f_global: Tensor, f_local: Tensor | None, class_id) -> Tensor:
        """MLP por keypoint sobre [posenc(k) ‖ f_local ‖ f_global ‖ one-hot]."""
        if self.decoder is None:
            raise ConfigError("rede configurada com a cabeça direta (R, t)")
        if (f_local is None) != (self.local_sa is None):
            raise ConfigError("features locais incompatíveis com a configuração")
        K = as_tensor(keypoints)
        n = len(K)
        onehot = Tensor(self._class_vector(class_id)).reshape(1, -1)
        parts = [positional_encoding(K, self.config.posenc_bands)]
        if f_local is not None:
            parts.append(f_local)
        parts.append(f_global.reshape(1, -1).broadcast_to((n, f_global.size)))
        parts.append(onehot.broadcast_to((n, onehot.size)))
        return self.decoder(concat(parts, axis=1))

    def class_logits(self, f_global: Tensor, f_local_pooled: Tensor | None = None) -> Tensor:
        if self.class_head is None:
            raise ConfigError("cabeça de classe desligada")
        x = f_global
        if self.config.class_head_input == "global_local":
            if f_local_pooled is None:
                raise ConfigError("cabeça global_local exige features locais agregadas")
            x = concat([f_global, f_local_pooled])
        return self.class_head(x.reshape(1, -1)).reshape(self.config.num_classes)

    def predict_class(self, f_global: Tensor, f_local_pooled: Tensor | None = None) -> Tensor:
        """Distribuição softmax sobre as classes."""
        return softmax(self.class_logits(f_global, f_local_pooled))

    def direct_rt_head(self, f_global: Tensor, f_local_pooled: Tensor | None, class_id) -> tuple[Tensor, Tensor]:
        """Rotação (6D + Gram–Schmidt) e translação relativa ao centro usado."""
        if self.rt_head is None:
            raise ConfigError("cabeça direta (R, t) desabilitada")
        parts = [f_global]
        if self.local_sa is not None:
            if f_local_pooled is None:
                raise ConfigError("cabeça direta exige features locais agregadas")
            parts.append(f_local_pooled)
        parts.append(Tensor(self._class_vector(class_id)))
        raw = self.rt_head(concat(parts).reshape(1, -1)).reshape(9) + _RT_BIAS
        return rotation_from_6d(raw), raw[6:9]

    # ---------- passo completo ----------

    def forward(
        self,
        cloud,
        canonical_keypoints: np.ndarray,
        class_id: int | None = None,
        center_used: np.ndarray | None = None,
    ) -> PopupForward:
        """
        Executa o fluxo completo. `center_used` substitui o centro previsto
        na colocação dos keypoints e na seleção da vizinhança (aquecimento
        com centro verdadeiro, suavização temporal). O centro usado nunca
        propaga gradiente.
        """
        P = _as_cloud_tensor(cloud)
        center, f_global = self.encode_global(P)
        used = center.data.copy() if center_used is None else np.asarray(center_used, dtype=np.float64).reshape(3)
        K = np.asarray(canonical_keypoints, dtype=np.float64)
        if len(K) != self.config.num_keypoints:
            raise ConfigError(f"esperados {self.config.num_keypoints} keypoints, recebidos {len(K)}")
        kp_at_center = K + used

        f_local = None
        pooled = None
        if self.local_sa is not None:
            local = P.gather(knn_indices(P.data, used, self.config.local_k))
            f_local = self.encode_local(kp_at_center, local)
            pooled = f_local.max(axis=0)

        logits = None
        if self.class_head is not None:
            logits = self.class_logits(f_global, pooled)
            if class_id is None:
                class_id = int(np.argmax(logits.data))
        if class_id is None:
            raise ConfigError("classe obrigatória quando a cabeça de classe está desligada")
        class_id = int(class_id)

        out = PopupForward(
            center=center,
            f_global=f_global,
            f_local=f_local,
            center_used=used,
            keypoints_at_center=kp_at_center,
            class_id=class_id,
            logits=logits,
        )
        if self.rt_head is not None:
            R, t = self.direct_rt_head(f_global, pooled, class_id)
            posed = Tensor(K) @ R.T + t + used
            out.rotation, out.translation = R, t
            out.offsets = posed - kp_at_center
        else:
            out.offsets = self.decode_offsets(Tensor(K), f_global, f_local, class_id)
        return out


# ============================================================
# Persistência
# ============================================================


def save_network(
    path: str,
    net: PopupNetwork,
    templates: list[ObjectTemplate],
    optimizer: AdamState | None = None,
    metadata: dict | None = None,
) -> None:
    """Checkpoint com parâmetros, arquitetura, hash e templates embutidos."""
    extras = {}
    for template in templates:
        prefix = f"template/{template.class_id}"
        extras[f"{prefix}/vertices"] = template.mesh.vertices
        extras[f"{prefix}/faces"] = template.mesh.faces
        extras[f"{prefix}/keypoints"] = template.keypoints
    meta = dict(metadata or {})
    meta["class_names"] = [t.name for t in templates]
    save_checkpoint(
        path,
        Checkpoint(
            params=net.state_dict(),
            model_config=model_config_to_dict(net.config),
            config_hash=config_hash(net.config),
            optimizer=optimizer,
            metadata=meta,
            extras=extras,
        ),
    )


def load_network(path: str) -> tuple[PopupNetwork, list[ObjectTemplate], Checkpoint]:
    checkpoint = load_checkpoint(path)
    try:
        config = model_config_from_dict(checkpoint.model_config)
    except (ConfigError, TypeError) as e:
        raise CheckpointError(f"arquitetura inválida em {path}: {e}") from e
    if config_hash(config) != checkpoint.config_hash:
        raise CheckpointError(f"hash da arquitetura não confere em {path}")
    net = PopupNetwork(config)
    net.load_state_dict(checkpoint.params)

    templates = []
    names = checkpoint.metadata.get("class_names", [])
    for class_id, name in enumerate(names):
        prefix = f"template/{class_id}"
        try:
            mesh = Mesh(checkpoint.extras[f"{prefix}/vertices"], checkpoint.extras[f"{prefix}/faces"])
            keypoints = checkpoint.extras[f"{prefix}/keypoints"]
        except KeyError as e:
            raise CheckpointError(f"template {name!r} ausente em {path}") from e
        templates.append(ObjectTemplate(class_id, name, mesh, keypoints))
    logger.info("Rede carregada de %s (%d classes)", path, len(templates))
    return net, templates, checkpoint
