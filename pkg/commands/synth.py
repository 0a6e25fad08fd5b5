from dataclasses import dataclass
from pathlib import Path

from config.config import ExperimentConfig, Split
from data.features_io import read_manifest, save_features
from data.oracle import nearest_centroid_accuracy
from data.synthetic import generate_synthetic
from ui.tui import TUI


@dataclass
class SynthResult:
    manifest_path: Path
    crc32: int
    oracle_accuracy: float


def cmd_synth(cfg: ExperimentConfig, out_path: Path, tui: TUI) -> SynthResult:
    spec = cfg.synthetic_spec()
    dataset = generate_synthetic(spec)
    manifest_path = save_features(dataset, out_path)
    manifest = read_manifest(manifest_path)
    accuracy = nearest_centroid_accuracy(dataset)

    tui.dataset_summary(
        name=dataset.name,
        path=manifest_path,
        counts={s.value: dataset.class_counts(s) for s in Split},
        oracle_accuracy=accuracy,
        crc32=manifest["crc32"],
    )
    return SynthResult(manifest_path=manifest_path, crc32=manifest["crc32"], oracle_accuracy=accuracy)
