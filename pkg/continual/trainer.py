import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Iterator

import numpy as np

from config.config import Modality, Split, TrainConfig
from continual.buffer import RehearsalBuffer, buffer_update
from continual.events import TrainEvent, TrainEventType
from continual.metrics import REPORTED_MODALITIES, AccuracyMatrix, MetricsReport
from continual.optim import Adam
from data.dataset import FeatureDataset
from data.splits import TaskSequence, TaskSpec, split_tasks
from losses import (
    ContrastiveBatch,
    LossBreakdown,
    LossParts,
    bce_logits,
    ce_new_tokens,
    continual_contrastive,
    kl_token_distill,
    token_targets,
    total_loss,
)
from model.network import CIGNModel, ModelOutput, Snapshot
from numerics import ops
from numerics.tape import backward
from numerics.tensor import Tensor, no_grad
from utils.errors import ConfigError, NonFiniteError

logger = logging.getLogger(__name__)

EVAL_CHUNK = 256
EVAL_WORKERS = 4


class ContinualTrainer:
    """按任务顺序训练一个 CIGN 模型。run() 是一个事件流，调用方负责消费"""

    def __init__(self, dataset: FeatureDataset, cfg: TrainConfig):
        self._validate(dataset, cfg)
        self.dataset = dataset
        self.cfg = cfg
        self.tasks: TaskSequence = split_tasks(dataset.class_ids, cfg.tasks, cfg.seed)

        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        self._init_rng = np.random.default_rng(seeds[0])
        self._batch_rng = np.random.default_rng(seeds[1])
        self._noise_rng = np.random.default_rng(seeds[2])

        self.model = CIGNModel.initialize(cfg, self._init_rng)
        self.buffer = RehearsalBuffer(cfg.buffer_capacity, cfg.seed)
        self.optimizer = Adam(lr=cfg.learning_rate)
        self.snapshot: Snapshot | None = None
        self.matrices: dict[Modality, AccuracyMatrix] = {m: AccuracyMatrix() for m in REPORTED_MODALITIES}
        self.report: MetricsReport | None = None
        self.steps = 0

    @staticmethod
    def _validate(dataset: FeatureDataset, cfg: TrainConfig) -> None:
        if dataset.num_classes != cfg.num_classes:
            raise ConfigError(
                "Dataset classes do not match the task schedule",
                config_key="classes_per_task",
                details={"dataset_classes": dataset.num_classes, "schedule_classes": cfg.num_classes},
            )
        if dataset.dim != cfg.dim or dataset.patches != cfg.patches:
            raise ConfigError(
                "Dataset feature shape does not match the config",
                config_key="dim",
                details={"dataset": [dataset.patches, dataset.dim], "config": [cfg.patches, cfg.dim]},
            )

    def run(self) -> Iterator[TrainEvent]:
        yield TrainEvent.run_start(
            tasks=[list(t.class_ids) for t in self.tasks], config=self.cfg.model_dump(mode="json")
        )
        for t, task in enumerate(self.tasks):
            yield from self._run_task(t, task)

        self.report = MetricsReport.from_matrices(self.matrices)
        self.report.val_accuracy = self._validation_accuracy()
        yield TrainEvent.run_end(self.report.to_dict())

    def begin_task(self, t: int, task: TaskSpec) -> None:
        """冻结上一个任务的模型，扩充 tokens；参数形状变了，Adam 状态清空"""
        if t > 0:
            self.snapshot = self.model.snapshot()
        self.model.expand_tokens(task.class_ids, self._init_rng)
        self.optimizer.reset()

    def _run_task(self, t: int, task: TaskSpec) -> Iterator[TrainEvent]:
        self.begin_task(t, task)
        yield TrainEvent.task_start(t, list(task.class_ids), self.model.bank.size, self.model.bank.old_count)

        train_idx = self.dataset.indices(Split.TRAIN, task.class_ids)
        task_steps = 0
        for epoch in range(self.cfg.epochs):
            for batch in self._batches(train_idx):
                breakdown, old_samples = self._train_step(t, batch)
                task_steps += 1
                yield TrainEvent.step(t, epoch, self.steps, breakdown, old_samples)

        if not self.cfg.disable_buffer:
            buffer_update(self.buffer, train_idx, self.dataset.labels[train_idx], task.class_ids)

        rows = self.evaluate(t)
        for modality, row in rows.items():
            self.matrices[modality].append(row)
        yield TrainEvent.evaluation(t, {m.value: row for m, row in rows.items()})
        yield TrainEvent.task_end(t, task_steps, self.buffer.to_dict())

    def _batches(self, train_idx: np.ndarray) -> Iterator[np.ndarray]:
        """有 buffer 时，每个 batch 一半当前任务样本、一半 buffer 样本"""
        replay = bool(self.buffer) and not self.cfg.disable_buffer
        current_size = self.cfg.batch_size // 2 if replay else self.cfg.batch_size
        order = self._batch_rng.permutation(train_idx)
        for start in range(0, len(order), current_size):
            chunk = order[start : start + current_size]
            if replay:
                chunk = np.concatenate([chunk, self.buffer.sample(self._batch_rng, self.cfg.batch_size - len(chunk))])
            yield chunk

    def _labels_onehot(self, labels: np.ndarray) -> np.ndarray:
        y = np.zeros((len(labels), self.model.bank.size))
        y[np.arange(len(labels)), self.model.bank.indices_of(labels)] = 1.0
        return y

    def compute_losses(
        self, batch: np.ndarray, rng: np.random.Generator | None = None
    ) -> tuple[LossParts, int]:
        """在一个 batch 上构造全部损失项。返回 (各项, batch 中旧类样本数)"""
        labels = self.dataset.labels[batch]
        audio = Tensor(self.dataset.audio[batch])
        visual = Tensor(self.dataset.visual[batch])
        out = self.model.forward(audio, visual, rng)
        y = self._labels_onehot(labels)
        inv_batch = 1.0 / len(batch)

        parts = LossParts(
            bce_audio=ops.scale(bce_logits(out.logits_audio, y), inv_batch),
            bce_visual=ops.scale(bce_logits(out.logits_visual, y), inv_batch),
        )
        if not self.cfg.disable_kl:
            parts.kl_old_tokens, _ = kl_token_distill(self.model.bank)
        if not self.cfg.disable_ce_new:
            parts.ce_new_tokens = ce_new_tokens(
                self.model.token_class_probs(), token_targets(self.model.bank.new_count)
            )

        old_samples = 0
        if self.snapshot is not None:
            old_rows = np.flatnonzero(np.isin(labels, self.snapshot.class_ids))
            new_rows = np.flatnonzero(~np.isin(labels, self.snapshot.class_ids))
            old_samples = len(old_rows)
            if not self.cfg.disable_ctl and len(old_rows) and len(new_rows):
                parts.ctl_audio, parts.ctl_visual = self._contrastive(batch, labels, out, old_rows, new_rows)
        return parts, old_samples

    def _contrastive(
        self,
        batch: np.ndarray,
        labels: np.ndarray,
        out: ModelOutput,
        old_rows: np.ndarray,
        new_rows: np.ndarray,
    ) -> tuple[Tensor, Tensor]:
        assert self.snapshot is not None
        old_batch = batch[old_rows]
        prev = self.snapshot.forward(
            Tensor(self.dataset.audio[old_batch]), Tensor(self.dataset.visual[old_batch])
        )
        # 旧类的 token 行在扩充前后下标不变
        old_tokens = self.snapshot.bank.indices_of(labels[old_rows])
        new_tokens = self.model.bank.indices_of(labels[new_rows])
        prev_rows = np.arange(len(old_rows))

        losses = []
        for g_prev, g_curr in ((prev.g_audio, out.g_audio), (prev.g_visual, out.g_visual)):
            losses.append(
                continual_contrastive(
                    ContrastiveBatch(
                        g_prev=Tensor(g_prev.data[prev_rows, old_tokens]),
                        g_curr_old=ops.gather(g_curr, (old_rows, old_tokens)),
                        g_curr_new=ops.gather(g_curr, (new_rows, new_tokens)),
                        tau=self.cfg.tau,
                        new_class_ids=labels[new_rows],
                        denominator=self.cfg.ctl_denominator,
                    )
                )
            )
        return losses[0], losses[1]

    def _train_step(self, t: int, batch: np.ndarray) -> tuple[LossBreakdown, int]:
        params = self.model.parameters()
        self.optimizer.zero_grad(params)
        parts, old_samples = self.compute_losses(batch, self._noise_rng)
        breakdown = total_loss(parts)
        if not math.isfinite(breakdown.total):
            raise NonFiniteError(
                f"Loss became non-finite at task {t} step {self.steps}",
                where=f"task {t} step {self.steps}",
                details=breakdown.to_dict(),
            )
        backward(breakdown.tensor)
        self.optimizer.step(params)
        self.steps += 1
        return breakdown, old_samples

    def _accuracy(self, idx: np.ndarray) -> dict[Modality, float]:
        if len(idx) == 0:
            return {m: 0.0 for m in REPORTED_MODALITIES}
        class_ids = np.array(self.model.class_ids)
        labels = self.dataset.labels[idx]
        correct = {m: 0 for m in REPORTED_MODALITIES}
        # 线程不会继承调用方的 context，需要自己关闭梯度记录
        with no_grad():
            for start in range(0, len(idx), EVAL_CHUNK):
                chunk = idx[start : start + EVAL_CHUNK]
                out = self.model.forward(Tensor(self.dataset.audio[chunk]), Tensor(self.dataset.visual[chunk]))
                for m in REPORTED_MODALITIES:
                    predicted = class_ids[out.predictions(m)]
                    correct[m] += int(np.sum(predicted == labels[start : start + EVAL_CHUNK]))
        return {m: correct[m] / len(idx) for m in REPORTED_MODALITIES}

    def evaluate(self, t: int) -> dict[Modality, list[float]]:
        """在任务 0..t 各自的测试集上评估当前模型，不使用任务 id"""
        test_sets = [self.dataset.indices(Split.TEST, self.tasks[i].class_ids) for i in range(t + 1)]
        with ThreadPoolExecutor(max_workers=EVAL_WORKERS) as pool:
            results = list(pool.map(self._accuracy, test_sets))
        return {m: [r[m] for r in results] for m in REPORTED_MODALITIES}

    def _validation_accuracy(self) -> dict[Modality, float]:
        idx = self.dataset.indices(Split.VAL, self.tasks.class_ids)
        if len(idx) == 0:
            return {}
        return self._accuracy(idx)


def run_sequence(
    dataset: FeatureDataset, cfg: TrainConfig
) -> tuple[dict[Modality, AccuracyMatrix], MetricsReport, list[dict[str, Any]]]:
    trainer = ContinualTrainer(dataset, cfg)
    log: list[dict[str, Any]] = []
    for event in trainer.run():
        log.append({"event": event.type.value, **event.data})
        if event.type == TrainEventType.TASK_END:
            logger.info(f"Finished task {event.data['task']} after {event.data['steps']} steps")
    assert trainer.report is not None
    return trainer.matrices, trainer.report, log
