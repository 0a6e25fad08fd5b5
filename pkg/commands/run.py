import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from commands.common import load_dataset, write_json
from config.config import ExperimentConfig
from continual.events import TrainEventType
from continual.metrics import matrices_to_csv
from continual.trainer import ContinualTrainer
from model.checkpoint import save_checkpoint
from ui.tui import TUI
from utils.paths import atomic_write_text

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
METRICS_FILE = "metrics.json"
MATRIX_FILE = "accuracy_matrix.csv"
LOG_FILE = "train_log.jsonl"
CHECKPOINT_DIR = "checkpoint"
RUN_ARTIFACTS = (CONFIG_FILE, METRICS_FILE, MATRIX_FILE, LOG_FILE)


@dataclass
class RunResult:
    out_dir: Path
    metrics: dict[str, Any]
    paths: list[Path] = field(default_factory=list)


def cmd_run(cfg: ExperimentConfig, tui: TUI, show_steps: bool = False) -> RunResult:
    """完整跑一次 class-incremental 序列，所有输出都写在 cfg.out_dir 下"""
    out_dir = cfg.out_dir
    dataset = load_dataset(cfg)
    trainer = ContinualTrainer(dataset, cfg.train_config())
    paths = [write_json(out_dir / CONFIG_FILE, cfg.to_dict())]

    log_lines: list[str] = []
    metrics: dict[str, Any] = {}
    try:
        for event in trainer.run():
            log_lines.append(event.to_json())
            data = event.data
            if event.type == TrainEventType.TASK_START:
                tui.task_start(data["task"], data["class_ids"], data["tokens"], data["old_tokens"])
            elif event.type == TrainEventType.STEP:
                if show_steps:
                    tui.step(data)
            elif event.type == TrainEventType.EVALUATION:
                tui.evaluation(data["task"], data["rows"])
            elif event.type == TrainEventType.TASK_END:
                tui.task_end(data["task"], data["steps"], data["buffer"])
            elif event.type == TrainEventType.RUN_END:
                metrics = {
                    "ablation": cfg.ablation,
                    "upper_bound": cfg.upper_bound,
                    "tasks": [list(t.class_ids) for t in trainer.tasks],
                    **data["metrics"],
                }
    finally:
        # 失败的 run 也保留已经产生的日志，方便定位是哪一步出的问题
        paths.append(atomic_write_text(out_dir / LOG_FILE, "\n".join(log_lines) + "\n"))

    paths.append(atomic_write_text(out_dir / MATRIX_FILE, matrices_to_csv(trainer.matrices)))
    paths.append(write_json(out_dir / METRICS_FILE, metrics))
    paths.append(
        save_checkpoint(trainer.model, out_dir / CHECKPOINT_DIR, metadata={"ablation": cfg.ablation})
    )
    tui.metrics_table(metrics, title=f"{cfg.ablation} ({len(trainer.tasks)} tasks)")
    for path in paths:
        tui.wrote(path)
    return RunResult(out_dir=out_dir, metrics=metrics, paths=paths)
