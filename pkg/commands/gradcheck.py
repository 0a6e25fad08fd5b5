"""梯度检查：每个登记的 primitive，加上由它们组合出来的模型部件和完整的总损失"""

import logging
from contextlib import nullcontext

import numpy as np

from config.config import AttentionVariant, Modality, Split, SyntheticSpec, TrainConfig
from continual.trainer import ContinualTrainer
from data.synthetic import generate_synthetic
from losses import (
    ContrastiveBatch,
    bce_class,
    bce_logits,
    ce_new_tokens,
    continual_contrastive,
    kl_token_distill,
    token_targets,
    total_loss,
)
from model.attention import AttentionAggregator, aggregate
from model.grouping import GroupingBlock, group
from model.heads import ClassifierHead, TokenHead, class_logits, classify, token_class_probs
from model.tokens import TOKEN_PARAM, ClassTokenBank
from numerics import ops
from numerics.functional import cosine_sim
from numerics.gradcheck import GradCheckResult, Probe, check_primitives, grad_check_params, run_probe, weighted_sum
from numerics.registry import get_op_registry
from numerics.tape import inject_fault
from numerics.tensor import Tensor
from ui.tui import TUI
from utils.errors import ConfigError, GradCheckError

logger = logging.getLogger(__name__)

TOY_DIM = 8
TOY_PATCHES = 4
TOLERANCE = 1e-4


def _param(rng: np.random.Generator, *shape: int, std: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _cosine_probe(rng: np.random.Generator) -> float:
    a, b = _param(rng, 6), _param(rng, 6)
    return grad_check_params(lambda: cosine_sim(a, b), [a, b])


def _aggregate_probe(variant: AttentionVariant) -> Probe:
    def probe(rng: np.random.Generator) -> float:
        feat = _param(rng, TOY_PATCHES, TOY_DIM)
        tokens = _param(rng, 3, TOY_DIM)
        agg = AttentionAggregator(Modality.VISUAL, TOY_DIM, 3, variant, rng, init_std=0.3)
        w_feat = rng.normal(size=(TOY_PATCHES, TOY_DIM))
        w_tok = rng.normal(size=(3, TOY_DIM))

        def f() -> Tensor:
            feat_out, token_out = aggregate(feat, tokens, agg)
            return ops.add(weighted_sum(feat_out, w_feat), weighted_sum(token_out, w_tok))

        return grad_check_params(f, [feat, tokens, *agg.parameters().values()])

    return probe


def _group_probe(rng: np.random.Generator) -> float:
    feat = _param(rng, TOY_PATCHES, TOY_DIM)
    tokens = _param(rng, 3, TOY_DIM)
    block = GroupingBlock(Modality.VISUAL, TOY_DIM, rng=rng, init_std=0.3)
    w = rng.normal(size=(3, TOY_DIM))
    return grad_check_params(
        lambda: weighted_sum(group(feat, tokens, block).embeddings, w),
        [feat, tokens, *block.parameters().values()],
    )


def _classify_bce_probe(rng: np.random.Generator) -> float:
    g = _param(rng, 4, TOY_DIM)
    head = ClassifierHead(Modality.AUDIO, TOY_DIM, rng, init_std=0.5)
    y = (rng.uniform(size=4) < 0.5).astype(np.float64)
    return grad_check_params(
        lambda: ops.add(bce_class(classify(g, head), y), bce_logits(class_logits(g, head), y)),
        [g, head.w_cls, head.b_cls],
    )


def _bank(rng: np.random.Generator, old: int, new: int) -> ClassTokenBank:
    tokens = rng.normal(size=(old + new, TOY_DIM))
    frozen = tokens[:old] + rng.normal(0.0, 0.3, size=(old, TOY_DIM)) if old else None
    return ClassTokenBank(
        tokens=Tensor(tokens, requires_grad=True, name=TOKEN_PARAM),
        class_ids=tuple(range(old + new)),
        old_count=old,
        frozen_old=frozen,
    )


def _token_ce_probe(rng: np.random.Generator) -> float:
    bank = _bank(rng, 2, 2)
    head = TokenHead(TOY_DIM, 2, rng, init_std=0.5)
    return grad_check_params(
        lambda: ce_new_tokens(token_class_probs(bank, head), token_targets(2)),
        [bank.tokens, head.w_tok, head.b_tok],
    )


def _kl_probe(rng: np.random.Generator) -> float:
    bank = _bank(rng, 2, 2)
    return grad_check_params(lambda: kl_token_distill(bank)[0], [bank.tokens])


def _contrastive_probe(rng: np.random.Generator) -> float:
    g_prev, g_old, g_new = _param(rng, 3, TOY_DIM), _param(rng, 3, TOY_DIM), _param(rng, 4, TOY_DIM)
    # 两个负样本同类，覆盖 max-pooling
    classes = np.array([5, 5, 6, 7])
    return grad_check_params(
        lambda: continual_contrastive(ContrastiveBatch(g_prev, g_old, g_new, new_class_ids=classes)),
        [g_prev, g_old, g_new],
    )


def toy_trainer(seed: int) -> tuple[ContinualTrainer, np.ndarray]:
    """D=8, P=4 的两任务玩具模型，停在第二个任务开始时（K=4，有快照）。
    返回 trainer 和一个含 2 个旧类样本、2 个新类样本的 batch"""
    spec = SyntheticSpec(
        num_classes=4, dim=TOY_DIM, patches=TOY_PATCHES,
        train_per_class=2, val_per_class=0, test_per_class=1, separation=3.0, sigma=0.5, seed=seed,
    )
    cfg = TrainConfig(
        tasks=2, classes_per_task=2, dim=TOY_DIM, patches=TOY_PATCHES,
        epochs=1, batch_size=4, seed=seed, init_std=0.3,
    )
    trainer = ContinualTrainer(generate_synthetic(spec), cfg)
    rng = np.random.default_rng(seed)
    trainer.begin_task(0, trainer.tasks[0])
    trainer.begin_task(1, trainer.tasks[1])
    # 让旧 tokens 偏离快照，KL 项不为 0
    trainer.model.bank.tokens.data = trainer.model.bank.tokens.data + rng.normal(
        0.0, 0.1, size=trainer.model.bank.tokens.shape
    )

    labels = trainer.dataset.labels
    train = trainer.dataset.indices(Split.TRAIN)
    old_a, old_b = trainer.tasks[0].class_ids
    new_a = trainer.tasks[1].class_ids[0]
    batch = np.array(
        [
            train[labels[train] == old_a][0],
            train[labels[train] == old_b][0],
            *train[labels[train] == new_a][:2],
        ]
    )
    return trainer, batch


def _full_chain_probe(rng: np.random.Generator) -> float:
    trainer, batch = toy_trainer(int(rng.integers(0, 2**31)))
    params = list(trainer.model.parameters().values())
    return grad_check_params(lambda: total_loss(trainer.compute_losses(batch)[0]).tensor, params)


# name -> (probe, 最多 trial 数)
COMPOSITE_PROBES: dict[str, tuple[Probe, int]] = {
    "cosine_sim": (_cosine_probe, 10),
    "aggregate": (_aggregate_probe(AttentionVariant.LITERAL), 5),
    "aggregate_projected": (_aggregate_probe(AttentionVariant.PROJECTED), 3),
    "group": (_group_probe, 5),
    "classify_bce": (_classify_bce_probe, 10),
    "token_ce": (_token_ce_probe, 10),
    "kl_token_distill": (_kl_probe, 10),
    "continual_contrastive": (_contrastive_probe, 10),
    "total_loss": (_full_chain_probe, 1),
}


def check_composites(seed: int, trials: int = 10, tolerance: float = TOLERANCE) -> list[GradCheckResult]:
    return [
        run_probe(name, probe, seed, min(trials, cap), tolerance, "composite")
        for name, (probe, cap) in COMPOSITE_PROBES.items()
    ]


def run_gradcheck(
    seed: int,
    trials: int = 10,
    tolerance: float = TOLERANCE,
    fault: str | None = None,
    composites: bool = True,
) -> list[GradCheckResult]:
    if fault is not None and fault not in get_op_registry():
        raise ConfigError(
            f"Unknown op {fault!r}",
            config_key="inject_fault",
            details={"choices": get_op_registry().names()},
        )
    with inject_fault(fault) if fault else nullcontext():
        results = check_primitives(seed, trials, tolerance)
        if composites:
            results += check_composites(seed, trials, tolerance)
    return results


def cmd_gradcheck(
    seed: int, tui: TUI, trials: int = 10, tolerance: float = TOLERANCE, fault: str | None = None
) -> list[GradCheckResult]:
    results = run_gradcheck(seed, trials, tolerance, fault)
    tui.gradcheck_table([r.to_dict() for r in results], tolerance)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GradCheckError(
            f"{len(failed)} gradient checks exceed the tolerance",
            details={"failed": ", ".join(failed), "tolerance": tolerance},
        )
    return results
