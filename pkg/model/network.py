import copy
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config.config import AssignmentMode, AttentionVariant, Modality, TrainConfig
from model.attention import AttentionAggregator, aggregate
from model.grouping import GroupingBlock, group
from model.heads import ClassifierHead, TokenHead, class_logits, predict_av, token_class_probs
from model.tokens import TOKEN_PARAM, ClassTokenBank, expand_tokens
from numerics import ops
from numerics.tensor import Tensor, no_grad
from utils.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    """一个 batch 的前向结果，K = 当前 token 数"""

    g_audio: Tensor  # B×K×D
    g_visual: Tensor  # B×K×D
    assignment_audio: Tensor  # B×1×K
    assignment_visual: Tensor  # B×P×K
    p_audio: Tensor  # B×K
    p_visual: Tensor  # B×K
    p_av: Tensor  # B×K
    logits_audio: Tensor  # B×K
    logits_visual: Tensor  # B×K

    def log_probs(self, modality: Modality) -> np.ndarray:
        """log p，由 logits 直接算。sigmoid 饱和到 1.0 时 p 会并列，log p 不会"""
        log_a = -np.logaddexp(0.0, -self.logits_audio.data)
        log_v = -np.logaddexp(0.0, -self.logits_visual.data)
        return {
            Modality.AUDIO: log_a,
            Modality.VISUAL: log_v,
            Modality.AUDIO_VISUAL: log_a + log_v,
        }[modality]

    def predictions(self, modality: Modality) -> np.ndarray:
        """按 token 下标返回 argmax p，调用方再映射回 class id"""
        return np.argmax(self.log_probs(modality), axis=-1)


class CIGNModel:
    """class token bank + 每个模态各自的 attention aggregator / grouping block / 分类头"""

    def __init__(
        self,
        dim: int,
        depth: int = 3,
        assignment_mode: AssignmentMode = AssignmentMode.SOFT,
        attention_variant: AttentionVariant = AttentionVariant.LITERAL,
        gumbel_noise: bool = False,
        init_std: float = 0.02,
        rng: np.random.Generator | None = None,
    ):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.init_std = init_std
        self.bank = ClassTokenBank.empty(dim)
        self.aggregators = {
            m: AttentionAggregator(m, dim, depth, attention_variant, rng, init_std)
            for m in (Modality.AUDIO, Modality.VISUAL)
        }
        self.grouping = {
            m: GroupingBlock(m, dim, assignment_mode, rng, init_std, gumbel_noise)
            for m in (Modality.AUDIO, Modality.VISUAL)
        }
        self.heads = {
            m: ClassifierHead(m, dim, rng, init_std) for m in (Modality.AUDIO, Modality.VISUAL)
        }
        self.token_head: TokenHead | None = None

    @classmethod
    def initialize(cls, cfg: TrainConfig, rng: np.random.Generator) -> "CIGNModel":
        return cls(
            dim=cfg.dim,
            depth=cfg.depth,
            assignment_mode=cfg.assignment_mode,
            attention_variant=cfg.attention_variant,
            gumbel_noise=cfg.gumbel_noise,
            init_std=cfg.init_std,
            rng=rng,
        )

    @property
    def class_ids(self) -> tuple[int, ...]:
        return self.bank.class_ids

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {TOKEN_PARAM: self.bank.tokens}
        for m in (Modality.AUDIO, Modality.VISUAL):
            params.update(self.aggregators[m].parameters())
            params.update(self.grouping[m].parameters())
            params.update(self.heads[m].parameters())
        if self.token_head is not None:
            params.update(self.token_head.parameters())
        return params

    def expand_tokens(self, new_class_ids: Sequence[int], rng: np.random.Generator) -> None:
        """新任务：扩充 token bank，token 约束头按当前任务的类别数重新初始化"""
        self.bank = expand_tokens(self.bank, new_class_ids, rng, self.init_std)
        self.token_head = TokenHead(self.dim, len(new_class_ids), rng, self.init_std)
        logger.debug(f"Token bank expanded to {self.bank.size} classes ({self.bank.old_count} old)")

    def snapshot(self) -> "Snapshot":
        return Snapshot.capture(self)

    def token_class_probs(self) -> Tensor:
        if self.token_head is None:
            raise ConfigError("Token head is created with the first task")
        return token_class_probs(self.bank, self.token_head)

    def forward(
        self,
        audio: Tensor,
        visual: Tensor,
        rng: np.random.Generator | None = None,
    ) -> ModelOutput:
        """audio: B×1×D, visual: B×P×D。rng 只在训练时传入（Gumbel 噪声）"""
        if audio.ndim != 3 or visual.ndim != 3 or audio.shape[0] != visual.shape[0]:
            raise ShapeError("Expected B×1×D audio and B×P×D visual", audio.shape, visual.shape)
        if self.bank.size == 0:
            raise ConfigError("Model has no class tokens yet")

        grouped = {}
        for modality, features in ((Modality.AUDIO, audio), (Modality.VISUAL, visual)):
            feat_out, token_out = aggregate(features, self.bank, self.aggregators[modality])
            out = group(feat_out, token_out, self.grouping[modality], rng)
            grouped[modality] = (out, class_logits(out.embeddings, self.heads[modality]))

        (audio_out, z_audio), (visual_out, z_visual) = grouped[Modality.AUDIO], grouped[Modality.VISUAL]
        p_audio, p_visual = ops.sigmoid(z_audio), ops.sigmoid(z_visual)
        return ModelOutput(
            g_audio=audio_out.embeddings,
            g_visual=visual_out.embeddings,
            assignment_audio=audio_out.assignment,
            assignment_visual=visual_out.assignment,
            p_audio=p_audio,
            p_visual=p_visual,
            p_av=predict_av(p_audio, p_visual),
            logits_audio=z_audio,
            logits_visual=z_visual,
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ConfigError(
                "Parameter names do not match the model",
                details={"missing": missing, "unexpected": unexpected},
            )
        for name, t in params.items():
            if state[name].shape != t.shape:
                raise ShapeError(f"Parameter {name} has the wrong shape", state[name].shape, t.shape)
            t.data = np.array(state[name], dtype=np.float64)


class Snapshot:
    """上一个任务结束时模型的冻结拷贝。参数只读，前向永远不记录计算图"""

    def __init__(self, model: CIGNModel):
        self._model = model

    @classmethod
    def capture(cls, model: CIGNModel) -> "Snapshot":
        frozen = copy.deepcopy(model)
        frozen.token_head = None
        for t in frozen.parameters().values():
            t.requires_grad = False
            t.grad = None
            t.data.flags.writeable = False
        return cls(frozen)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return self._model.class_ids

    @property
    def bank(self) -> ClassTokenBank:
        return self._model.bank

    def state_dict(self) -> dict[str, np.ndarray]:
        return self._model.state_dict()

    def forward(self, audio: Tensor, visual: Tensor) -> ModelOutput:
        with no_grad():
            return self._model.forward(audio, visual)
