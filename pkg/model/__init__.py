from model.attention import AttentionAggregator, aggregate
from model.checkpoint import Checkpoint, load_checkpoint, restore, save_checkpoint
from model.grouping import GroupingBlock, GroupingOutput, group
from model.heads import ClassifierHead, TokenHead, classify, predict_av, token_class_probs
from model.network import CIGNModel, ModelOutput, Snapshot
from model.tokens import ClassTokenBank, expand_tokens

__all__ = [
    "AttentionAggregator",
    "aggregate",
    "Checkpoint",
    "load_checkpoint",
    "restore",
    "save_checkpoint",
    "GroupingBlock",
    "GroupingOutput",
    "group",
    "ClassifierHead",
    "TokenHead",
    "classify",
    "predict_av",
    "token_class_probs",
    "CIGNModel",
    "ModelOutput",
    "Snapshot",
    "ClassTokenBank",
    "expand_tokens",
]
