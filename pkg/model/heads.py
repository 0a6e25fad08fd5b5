import numpy as np

from config.config import Modality
from model.tokens import ClassTokenBank
from numerics import ops
from numerics.functional import linear
from numerics.tensor import Tensor
from utils.errors import ShapeError


class ClassifierHead:
    """一个模态共享的 FC(D→1) + sigmoid，对每个 class-aware 特征 g_i 独立输出二分类概率"""

    def __init__(
        self,
        modality: Modality,
        dim: int,
        rng: np.random.Generator | None = None,
        init_std: float = 0.02,
    ):
        rng = rng or np.random.default_rng(0)
        self.modality = modality
        self.dim = dim
        self.w_cls = Tensor(
            rng.normal(0.0, init_std, size=(dim, 1)),
            requires_grad=True,
            name=f"{modality.value}.head.w_cls",
        )
        self.b_cls = Tensor(np.zeros(1), requires_grad=True, name=f"{modality.value}.head.b_cls")

    def parameters(self) -> dict[str, Tensor]:
        return {t.name or "": t for t in (self.w_cls, self.b_cls)}


class TokenHead:
    """FC(D→K_task) + softmax，预测每个新 token 属于当前任务的哪个类别。每个任务重新初始化"""

    def __init__(
        self,
        dim: int,
        classes: int,
        rng: np.random.Generator | None = None,
        init_std: float = 0.02,
    ):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.classes = classes
        self.w_tok = Tensor(
            rng.normal(0.0, init_std, size=(dim, classes)),
            requires_grad=True,
            name="token_head.w_tok",
        )
        self.b_tok = Tensor(np.zeros(classes), requires_grad=True, name="token_head.b_tok")

    def parameters(self) -> dict[str, Tensor]:
        return {t.name or "": t for t in (self.w_tok, self.b_tok)}


def class_logits(g: Tensor, head: ClassifierHead) -> Tensor:
    """g: (B×)K×D -> z: (B×)K，z_i = g_i W_cls + b"""
    if g.shape[-1] != head.dim:
        raise ShapeError("Embedding width differs from head input", g.shape, head.w_cls.shape)
    return ops.reshape(linear(g, head.w_cls, head.b_cls), g.shape[:-1])


def classify(g: Tensor, head: ClassifierHead) -> Tensor:
    """p_i = sigmoid(z_i)"""
    return ops.sigmoid(class_logits(g, head))


def token_class_probs(bank: ClassTokenBank, head: TokenHead) -> Tensor:
    """只作用于新 tokens：e_i = Softmax(FC(c_i))，形状 K_new × K_task"""
    if bank.dim != head.dim:
        raise ShapeError("Token width differs from head input", bank.tokens.shape, head.w_tok.shape)
    return ops.softmax(linear(bank.new_tokens(), head.w_tok, head.b_tok), axis=-1)


def predict_av(p_audio: Tensor, p_visual: Tensor) -> Tensor:
    """product-of-logits 融合：p_av = p_a * p_v"""
    if p_audio.shape != p_visual.shape:
        raise ShapeError("Audio and visual probabilities differ in length", p_audio.shape, p_visual.shape)
    return ops.mul(p_audio, p_visual)
