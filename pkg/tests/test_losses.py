import math

import numpy as np
import pytest

from config.config import DenominatorVariant
from continual.optim import Adam
from losses import (
    TERM_NAMES,
    ContrastiveBatch,
    LossParts,
    bce_class,
    bce_logits,
    ce_new_tokens,
    continual_contrastive,
    kl_divergence,
    kl_token_distill,
    token_targets,
    total_loss,
)
from model import ClassTokenBank, TokenHead, expand_tokens, token_class_probs
from numerics import Tensor, backward, grad_check, grad_check_params, ops
from utils.errors import ConfigError, DegenerateVectorError, LossError, ShapeError

D = 8


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def loop_contrastive(g_prev, g_old, g_new, class_ids, tau, with_positive=False) -> float:
    total = 0.0
    for n in range(len(g_prev)):
        pos = cosine(g_prev[n], g_old[n]) / tau
        pooled = {}
        for m, c in enumerate(class_ids):
            s = cosine(g_prev[n], g_new[m])
            pooled[c] = max(pooled.get(c, -math.inf), s)
        terms = [s / tau for s in pooled.values()] + ([pos] if with_positive else [])
        total += math.log(sum(math.exp(x) for x in terms)) - pos
    return total / len(g_prev)


# --- KL ----------------------------------------------------------------------


def test_kl_examples():
    assert kl_divergence(Tensor([0.3, 0.7]), Tensor([0.3, 0.7])).item() == 0.0
    assert kl_divergence(Tensor([1.0, 0.0]), Tensor([0.5, 0.5])).item() == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(ShapeError):
        kl_divergence(Tensor([1.0]), Tensor([0.5, 0.5]))


def test_token_distill_is_zero_before_any_snapshot(rng):
    bank = expand_tokens(ClassTokenBank.empty(D), [0, 1], rng)
    value, active = kl_token_distill(bank)
    assert value.item() == 0.0 and not active
    assert not value.requires_grad


def test_token_distill_zero_when_unchanged_and_positive_otherwise(rng):
    bank = expand_tokens(expand_tokens(ClassTokenBank.empty(D), [0, 1, 2], rng), [3, 4], rng)
    value, active = kl_token_distill(bank)
    assert active
    assert abs(value.item()) <= 1e-12

    bank.tokens.data = bank.tokens.data + rng.normal(0.0, 0.5, size=bank.tokens.shape)
    value, _ = kl_token_distill(bank)
    assert value.item() > 0.0
    assert grad_check_params(lambda: kl_token_distill(bank)[0], [bank.tokens]) <= 1e-4


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_token_distill_is_current_against_previous(rng):
    bank = expand_tokens(expand_tokens(ClassTokenBank.empty(D), [0, 1], rng), [2], rng)
    bank.tokens.data = bank.tokens.data + rng.normal(0.0, 0.8, size=bank.tokens.shape)
    p = _softmax(bank.tokens.data[:2])
    q = _softmax(np.asarray(bank.frozen_old))
    forward_kl = float(np.sum(p * (np.log(p) - np.log(q))))
    reverse_kl = float(np.sum(q * (np.log(q) - np.log(p))))

    value, _ = kl_token_distill(bank)
    assert value.item() == pytest.approx(forward_kl, rel=1e-10)
    assert value.item() != pytest.approx(reverse_kl, rel=1e-6)


# --- CE ----------------------------------------------------------------------


def test_ce_examples():
    targets = token_targets(3)
    assert ce_new_tokens(Tensor(targets), targets).item() == 0.0
    uniform = Tensor(np.full((2, 4), 0.25))
    assert ce_new_tokens(uniform, token_targets(4)[:2]).item() == pytest.approx(2 * math.log(4), abs=1e-12)


def test_ce_rejects_non_one_hot_targets():
    with pytest.raises(LossError):
        ce_new_tokens(Tensor(np.full((2, 2), 0.5)), np.array([[0.5, 0.5], [0.0, 1.0]]))
    with pytest.raises(LossError):
        ce_new_tokens(Tensor(np.full((2, 2), 0.5)), np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ShapeError):
        ce_new_tokens(Tensor(np.full((2, 2), 0.5)), token_targets(3))


def test_ce_gradient_through_token_head(rng):
    bank = expand_tokens(ClassTokenBank.empty(D), [0, 1, 2], rng, std=1.0)
    head = TokenHead(D, 3, rng, 0.5)
    f = lambda: ce_new_tokens(token_class_probs(bank, head), token_targets(3))
    assert grad_check_params(f, [bank.tokens, head.w_tok, head.b_tok]) <= 1e-4


def test_minimizing_ce_separates_new_tokens():
    rng = np.random.default_rng(7)
    bank = expand_tokens(ClassTokenBank.empty(D), [10, 11, 12, 13], rng)
    head = TokenHead(D, 4, rng)
    params = {"tokens": bank.tokens, "w_tok": head.w_tok, "b_tok": head.b_tok}
    optimizer = Adam(lr=0.05)
    for _ in range(200):
        optimizer.zero_grad(params)
        backward(ce_new_tokens(token_class_probs(bank, head), token_targets(4)))
        optimizer.step(params)
    predicted = np.argmax(token_class_probs(bank, head).data, axis=-1)
    np.testing.assert_array_equal(predicted, np.arange(4))


# --- BCE ---------------------------------------------------------------------


def test_bce_examples():
    assert bce_class(Tensor([0.5]), np.array([1.0])).item() == pytest.approx(math.log(2), abs=1e-15)
    y = np.array([1.0, 0.0, 1.0, 0.0])
    assert bce_class(Tensor(y), y).item() <= len(y) * 1e-6
    with pytest.raises(ShapeError):
        bce_class(Tensor([0.5, 0.5]), np.array([1.0]))


def test_bce_gradient_from_logits(rng):
    y = (rng.uniform(size=6) > 0.5).astype(float)
    assert grad_check(lambda x: bce_class(ops.sigmoid(x), y), rng.normal(size=6)) <= 1e-5


def test_bce_logits_equals_bce_of_sigmoid(rng):
    z = rng.normal(0.0, 3.0, size=(4, 5))
    y = (rng.uniform(size=(4, 5)) > 0.5).astype(float)
    expected = bce_class(ops.sigmoid(Tensor(z)), y).item()
    assert bce_logits(Tensor(z), y).item() == pytest.approx(expected, rel=1e-10)
    with pytest.raises(ShapeError):
        bce_logits(Tensor(z), y[:, :2])


def test_bce_logits_keeps_gradient_when_saturated():
    # z = ±40 时 sigmoid 已经是 1.0 / 4e-18，clamp 版本在这里梯度为 0
    z = Tensor(np.array([40.0, -40.0, 40.0]), requires_grad=True)
    y = np.array([0.0, 1.0, 1.0])
    loss = bce_logits(z, y)
    assert loss.item() == pytest.approx(80.0, abs=1e-12)
    loss.backward()
    np.testing.assert_allclose(z.grad, [1.0, -1.0, 0.0], atol=1e-15)
    assert grad_check(lambda x: bce_logits(x, y), z.data) <= 1e-6


# --- continual contrastive ---------------------------------------------------


def test_contrastive_single_pair_closed_form(rng):
    prev, old, new = (rng.normal(size=(1, D)) for _ in range(3))
    tau = 0.07
    loss = continual_contrastive(ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(new), tau)).item()
    expected = (cosine(prev[0], new[0]) - cosine(prev[0], old[0])) / tau
    assert loss == pytest.approx(expected, abs=1e-10)

    equal = continual_contrastive(ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(old), tau)).item()
    assert abs(equal) <= 1e-12


@pytest.mark.parametrize("seed", range(100))
@pytest.mark.parametrize("class_ids", [[5, 6, 7], [5, 5, 6]])
def test_contrastive_matches_loop_oracle(seed, class_ids):
    rng = np.random.default_rng(seed)
    prev, old, new = (rng.normal(size=(3, D)) for _ in range(3))
    batch = ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(new), 0.07, np.array(class_ids))
    expected = loop_contrastive(prev, old, new, class_ids, 0.07)
    assert abs(continual_contrastive(batch).item() - expected) <= 1e-10


def test_contrastive_with_positive_variant(rng):
    prev, old, new = (rng.normal(size=(3, D)) for _ in range(3))
    batch = ContrastiveBatch(
        Tensor(prev), Tensor(old), Tensor(new), 0.5, denominator=DenominatorVariant.WITH_POSITIVE
    )
    value = continual_contrastive(batch).item()
    assert value == pytest.approx(loop_contrastive(prev, old, new, [0, 1, 2], 0.5, with_positive=True), abs=1e-10)
    # 分母包含正样本时损失非负
    assert value >= 0.0


def test_contrastive_is_invariant_to_row_scaling(rng):
    prev, old, new = (rng.normal(size=(3, D)) for _ in range(3))
    base = continual_contrastive(ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(new))).item()
    prev[1] *= 4.5
    new[2] *= 0.2
    scaled = continual_contrastive(ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(new))).item()
    assert scaled == pytest.approx(base, abs=1e-10)


def test_contrastive_validation(rng):
    prev, old = rng.normal(size=(2, D)), rng.normal(size=(2, D))
    with pytest.raises(ConfigError):
        ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(old), tau=0.0)
    with pytest.raises(ShapeError):
        ContrastiveBatch(Tensor(prev), Tensor(old[:1]), Tensor(old))
    with pytest.raises(ShapeError):
        ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(np.zeros((0, D))))
    prev[0] = 0.0
    with pytest.raises(DegenerateVectorError):
        continual_contrastive(ContrastiveBatch(Tensor(prev), Tensor(old), Tensor(old)))


def test_contrastive_gradients(rng):
    prev = Tensor(rng.normal(size=(2, D)))
    old = Tensor(rng.normal(size=(2, D)), requires_grad=True)
    new = Tensor(rng.normal(size=(4, D)), requires_grad=True)
    ids = np.array([5, 5, 6, 7])
    f = lambda: continual_contrastive(ContrastiveBatch(prev, old, new, 0.5, ids))
    assert grad_check_params(f, [old, new]) <= 1e-4


# --- total -------------------------------------------------------------------


def test_total_of_zero_parts_is_zero():
    breakdown = total_loss(LossParts())
    assert breakdown.total == 0.0
    assert set(breakdown.to_dict()) == set(TERM_NAMES) | {"total"}


def test_total_is_the_sum_of_its_terms(rng):
    for _ in range(20):
        parts = LossParts(**{name: Tensor(rng.normal()) for name in TERM_NAMES})
        breakdown = total_loss(parts)
        terms = sum(getattr(breakdown, name) for name in TERM_NAMES)
        assert abs(breakdown.total - terms) <= 1e-10
        assert breakdown.tensor.item() == breakdown.total
