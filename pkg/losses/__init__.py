from losses.contrastive import ContrastiveBatch, continual_contrastive, pooled_negative_similarity
from losses.grouping_loss import (
    bce_class,
    bce_logits,
    ce_new_tokens,
    kl_divergence,
    kl_token_distill,
    token_targets,
)
from losses.total import TERM_NAMES, LossBreakdown, LossParts, total_loss

__all__ = [
    "ContrastiveBatch",
    "continual_contrastive",
    "pooled_negative_similarity",
    "bce_class",
    "bce_logits",
    "ce_new_tokens",
    "kl_divergence",
    "kl_token_distill",
    "token_targets",
    "TERM_NAMES",
    "LossBreakdown",
    "LossParts",
    "total_loss",
]
