from data.dataset import FeatureDataset, FeatureSample
from data.features_io import load_features, read_manifest, save_features
from data.oracle import nearest_centroid_accuracy
from data.splits import TaskSequence, TaskSpec, split_tasks
from data.synthetic import generate_synthetic

__all__ = [
    "FeatureDataset",
    "FeatureSample",
    "TaskSequence",
    "TaskSpec",
    "generate_synthetic",
    "load_features",
    "save_features",
    "read_manifest",
    "split_tasks",
    "nearest_centroid_accuracy",
]
