from enum import Enum
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

load_dotenv()


class Modality(str, Enum):
    AUDIO = "audio"
    VISUAL = "visual"
    AUDIO_VISUAL = "audio_visual"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class AssignmentMode(str, Enum):
    SOFT = "soft"
    HARD = "hard"


class AttentionVariant(str, Enum):
    # 直接按 Softmax(x X^T / sqrt(D)) X 计算，没有可学习的投影
    LITERAL = "literal"
    # 标准的 Q/K/V 投影
    PROJECTED = "projected"


class DenominatorVariant(str, Enum):
    # 分母只包含新类别的项
    AS_WRITTEN = "as-written"
    # 分母额外加上正样本项（常规 InfoNCE）
    WITH_POSITIVE = "with-positive"


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(default=8, ge=2)
    dim: int = Field(default=32, gt=0)
    patches: int = Field(default=4, gt=0)
    train_per_class: int = Field(default=100, ge=0)
    val_per_class: int = Field(default=10, ge=0)
    test_per_class: int = Field(default=20, ge=0)
    separation: float = Field(default=6.0, ge=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=0.8, ge=0.0, le=1.0)
    seed: int = 0
    name: str = "synthetic"


class TrainConfig(BaseModel):
    """一次 class-incremental 训练的全部超参数。默认值除了维度以外与论文设置一致"""

    model_config = ConfigDict(extra="forbid")

    tasks: int = Field(default=4, gt=0)
    classes_per_task: int = Field(default=2, gt=0)
    dim: int = Field(default=32, gt=0)
    patches: int = Field(default=4, gt=0)
    depth: int = Field(default=3, gt=0)
    tau: float = Field(default=0.07, gt=0.0)
    epochs: int = Field(default=100, gt=0)
    batch_size: int = Field(default=32, ge=2)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    buffer_capacity: int = Field(default=50, gt=0)
    seed: int = 0
    init_std: float = Field(default=0.02, gt=0.0)
    assignment_mode: AssignmentMode = AssignmentMode.SOFT
    gumbel_noise: bool = False
    ctl_denominator: DenominatorVariant = DenominatorVariant.AS_WRITTEN
    attention_variant: AttentionVariant = AttentionVariant.LITERAL

    disable_kl: bool = False
    disable_ce_new: bool = False
    disable_ctl: bool = False
    disable_buffer: bool = False
    # 把所有类别当作一个任务联合训练，作为 upper bound
    upper_bound: bool = False

    @property
    def num_classes(self) -> int:
        return self.tasks * self.classes_per_task

    @model_validator(mode="before")
    @classmethod
    def fold_upper_bound(cls, data: Any) -> Any:
        """upper bound 是把全部类别放进一个任务联合训练"""
        if isinstance(data, dict) and data.get("upper_bound"):
            tasks = int(data.get("tasks", 4))
            if tasks != 1:
                data = dict(data)
                data["classes_per_task"] = tasks * int(data.get("classes_per_task", 2))
                data["tasks"] = 1
        return data


class ExperimentConfig(TrainConfig):
    """CLI 使用的扁平配置：训练参数 + 数据来源 + 输出目录"""

    separation: float = Field(default=6.0, ge=0.0)
    sigma: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=0.8, ge=0.0, le=1.0)
    train_per_class: int = Field(default=100, ge=0)
    val_per_class: int = Field(default=10, ge=0)
    test_per_class: int = Field(default=20, ge=0)
    dataset_path: Path | None = None
    out_dir: Path = Path("runs/default")
    debug: bool = False

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_classes=self.num_classes,
            dim=self.dim,
            patches=self.patches,
            train_per_class=self.train_per_class,
            val_per_class=self.val_per_class,
            test_per_class=self.test_per_class,
            separation=self.separation,
            sigma=self.sigma,
            rho=self.rho,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        fields = set(TrainConfig.model_fields)
        return TrainConfig(**{k: v for k, v in self.model_dump().items() if k in fields})

    @property
    def ablation(self) -> str:
        """ablation 名字，结果表和 metrics.json 里都用它"""
        avctd = not (self.disable_kl and self.disable_ce_new)
        avcg = not self.disable_ctl
        if avctd and avcg:
            return "full"
        if avctd:
            return "avctd-only"
        if avcg:
            return "avcg-only"
        return "baseline"

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")
