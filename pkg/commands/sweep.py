import logging
from pathlib import Path
from typing import Any, Sequence

from pydantic import ValidationError

from commands.run import cmd_run
from config.config import ExperimentConfig
from continual.metrics import REPORTED_MODALITIES
from ui.tui import TUI
from utils.errors import ConfigError
from utils.paths import atomic_write_text

logger = logging.getLogger(__name__)

SWEEP_FILE = "sweep.csv"
# CLI 上的短名字 -> 配置字段
SWEEPABLE = {
    "depth": "depth",
    "buffer": "buffer_capacity",
    "buffer_capacity": "buffer_capacity",
    "assignment": "assignment_mode",
    "assignment_mode": "assignment_mode",
    "attention": "attention_variant",
    "attention_variant": "attention_variant",
    "ctl_denominator": "ctl_denominator",
    "tasks": "tasks",
    "tau": "tau",
    "lr": "learning_rate",
    "learning_rate": "learning_rate",
    "epochs": "epochs",
}


def resolve_param(param: str) -> str:
    key = SWEEPABLE.get(param.replace("-", "_"))
    if key is None:
        raise ConfigError(
            f"Cannot sweep over {param!r}",
            config_key=param,
            details={"choices": sorted(set(SWEEPABLE))},
        )
    return key


def variant_config(cfg: ExperimentConfig, key: str, value: str, out_dir: Path) -> ExperimentConfig:
    data = cfg.model_dump()
    data[key] = value
    data["out_dir"] = out_dir
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid sweep value {value!r} for {key}", config_key=key, cause=e) from e


def _row(value: str, metrics: dict[str, Any]) -> dict[str, Any]:
    row: dict[str, Any] = {"value": value}
    for modality in REPORTED_MODALITIES:
        entry = metrics.get(modality.value, {})
        row[f"{modality.value}_average_accuracy"] = entry.get("final_average_accuracy")
        row[f"{modality.value}_forgetting"] = entry.get("final_forgetting")
    return row


def sweep_csv(param: str, rows: list[dict[str, Any]]) -> str:
    columns = [k for k in rows[0] if k != "value"] if rows else []
    lines = [",".join([param, *columns])]
    for row in rows:
        cells = [str(row["value"])] + ["" if row[c] is None else repr(row[c]) for c in columns]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg: ExperimentConfig, param: str, values: Sequence[str], tui: TUI) -> list[dict[str, Any]]:
    """每个取值完整跑一次，结果放在 <out>/<param>=<value>/，最后汇总成 sweep.csv"""
    key = resolve_param(param)
    if not values:
        raise ConfigError("Sweep needs at least one value", config_key=key)
    # 先校验全部取值，避免跑到一半才发现配置错误
    variants = [(v, variant_config(cfg, key, v, cfg.out_dir / f"{key}={v}")) for v in values]

    rows = []
    for value, variant in variants:
        tui.print_welcome(f"{key} = {value}", [f"out: {variant.out_dir}"])
        result = cmd_run(variant, tui)
        rows.append(_row(value, result.metrics))

    tui.sweep_table(key, rows)
    path = atomic_write_text(cfg.out_dir / SWEEP_FILE, sweep_csv(key, rows))
    tui.wrote(path)
    return rows
