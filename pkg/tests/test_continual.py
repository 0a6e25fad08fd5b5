import numpy as np
import pytest

from config.config import AssignmentMode, Modality, Split, SyntheticSpec, TrainConfig
from continual import (
    AccuracyMatrix,
    Adam,
    AdamState,
    ContinualTrainer,
    MetricsReport,
    RehearsalBuffer,
    TrainEventType,
    adam_step,
    average_accuracy,
    buffer_update,
    forgetting,
    matrices_to_csv,
    run_sequence,
)
from data.synthetic import generate_synthetic
from losses import LossParts
from numerics import Tensor
from utils.errors import ConfigError, MetricError, NonFiniteError

# --- rehearsal buffer --------------------------------------------------------


def test_short_stream_is_kept_whole():
    buffer = buffer_update(RehearsalBuffer(50, seed=0), range(10), [3] * 10, [3])
    assert buffer.count(3) == 10
    assert buffer.class_indices(3) == list(range(10))


def test_long_stream_is_capped():
    buffer = buffer_update(RehearsalBuffer(50, seed=0), range(1000), [1] * 1000, [1])
    assert buffer.count(1) == 50 and buffer.seen(1) == 1000
    assert len(set(buffer.class_indices(1))) == 50


def test_buffer_ignores_foreign_labels_and_counts_per_class():
    buffer = RehearsalBuffer(3, seed=1)
    buffer_update(buffer, range(12), [0, 1, 2] * 4, [0, 1])
    assert buffer.classes == (0, 1)
    assert len(buffer) == 6 <= buffer.capacity * len(buffer.classes)
    assert buffer.to_dict() == {"0": 3, "1": 3}


def test_reservoir_keeps_each_element_uniformly():
    stream, capacity, trials = 100, 50, 10_000
    kept = np.zeros(stream)
    for trial in range(trials):
        buffer = RehearsalBuffer(capacity, seed=trial)
        for i in range(stream):
            buffer.add(0, i)
        kept[buffer.class_indices(0)] += 1
    p = capacity / stream
    sigma = np.sqrt(p * (1 - p) / trials)
    # 100 个元素同时检验，放宽到 4.5σ
    assert np.all(np.abs(kept / trials - p) <= 4.5 * sigma)


def test_buffer_sample_without_replacement(rng):
    buffer = buffer_update(RehearsalBuffer(5), range(20), [0] * 10 + [1] * 10, [0, 1])
    picked = buffer.sample(rng, 8)
    assert len(set(picked.tolist())) == 8
    assert set(picked.tolist()) <= set(buffer.indices().tolist())
    assert len(buffer.sample(rng, 100)) == 10
    assert len(RehearsalBuffer(5).sample(rng, 4)) == 0


def test_buffer_rejects_zero_capacity():
    with pytest.raises(ConfigError):
        RehearsalBuffer(0)


# --- metrics -----------------------------------------------------------------


def loop_forgetting(rows: list[list[float]], t: int) -> float:
    total = 0.0
    for i in range(t):
        best = -1.0
        for k in range(i, t + 1):
            if rows[k][i] > best:
                best = rows[k][i]
        total += best - rows[t][i]
    return total / t


def test_metric_examples():
    m = AccuracyMatrix([[0.9], [0.8, 0.7]])
    assert average_accuracy(m, 1) == pytest.approx(0.75, abs=1e-15)
    assert forgetting(m, 1) == pytest.approx(0.1, abs=1e-15)


def test_monotone_accuracy_never_forgets():
    m = AccuracyMatrix([[0.5], [0.6, 0.4], [0.7, 0.5, 0.9]])
    assert forgetting(m, 1) == 0.0 and forgetting(m, 2) == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    rows = [rng.uniform(size=t + 1).tolist() for t in range(4)]
    m = AccuracyMatrix(rows)
    for t in range(4):
        assert abs(average_accuracy(m, t) - sum(rows[t]) / (t + 1)) <= 1e-12
    for t in range(1, 4):
        assert abs(forgetting(m, t) - loop_forgetting(rows, t)) <= 1e-12


def test_metric_errors():
    m = AccuracyMatrix([[0.9]])
    with pytest.raises(MetricError):
        forgetting(m, 0)
    with pytest.raises(MetricError):
        average_accuracy(m, 1)
    with pytest.raises(MetricError):
        m.append([0.5])
    with pytest.raises(MetricError):
        AccuracyMatrix([[1.2]])


def test_report_omits_forgetting_for_one_task():
    report = MetricsReport.from_matrices({Modality.AUDIO_VISUAL: AccuracyMatrix([[0.8]])})
    data = report.to_dict()["audio_visual"]
    assert data["final_average_accuracy"] == 0.8
    assert "forgetting" not in data
    assert report.final(Modality.AUDIO_VISUAL) == (0.8, None)


def test_matrix_csv_is_long_format():
    csv = matrices_to_csv({Modality.AUDIO: AccuracyMatrix([[0.5], [0.25, 1.0]])})
    assert csv.splitlines() == [
        "modality,after_task,task,accuracy",
        "audio,0,0,0.5",
        "audio,1,0,0.25",
        "audio,1,1,1.0",
    ]


# --- Adam --------------------------------------------------------------------


def test_zero_gradient_leaves_parameters():
    p = {"w": np.array([1.0, -2.0])}
    out = adam_step(p, {"w": np.zeros(2)}, AdamState(), 0.1)
    np.testing.assert_array_equal(out["w"], p["w"])


def test_first_step_moves_by_learning_rate():
    out = adam_step({"w": np.zeros(3)}, {"w": np.array([3.0, -0.5, 10.0])}, AdamState(), 1e-3)
    np.testing.assert_allclose(np.abs(out["w"]), 1e-3, rtol=1e-6)


def test_adam_shrinks_a_quadratic_bowl():
    target = np.array([1.0, -2.0, 0.5])
    w = Tensor(target + 5.0, requires_grad=True)
    optimizer = Adam(lr=0.1)
    start = np.linalg.norm(w.data - target)
    for _ in range(500):
        w.grad = 2.0 * (w.data - target)
        optimizer.step({"w": w})
    assert np.linalg.norm(w.data - target) * 100 <= start


def test_adam_names_the_non_finite_parameter():
    with pytest.raises(NonFiniteError, match="tokens"):
        adam_step({"tokens": np.zeros(2)}, {"tokens": np.array([np.nan, 0.0])}, AdamState(), 0.1)


def test_adam_restarts_moments_when_a_parameter_grows():
    state = AdamState()
    adam_step({"w": np.zeros(2)}, {"w": np.ones(2)}, state, 0.1)
    out = adam_step({"w": np.zeros(3)}, {"w": np.ones(3)}, state, 0.1)
    assert state.m["w"].shape == (3,)
    assert np.all(np.isfinite(out["w"]))


# --- trainer -----------------------------------------------------------------


@pytest.mark.parametrize("tasks", [1, 2, 4, 8])
def test_token_count_follows_the_schedule(tasks):
    dataset = generate_synthetic(SyntheticSpec(num_classes=8, dim=8, patches=2, train_per_class=2, val_per_class=0, test_per_class=1))
    trainer = ContinualTrainer(dataset, TrainConfig(tasks=tasks, classes_per_task=8 // tasks, dim=8, patches=2, depth=1))
    for t, task in enumerate(trainer.tasks):
        trainer.begin_task(t, task)
        assert trainer.model.bank.size == trainer.tasks.cumulative_classes(t)
        assert trainer.model.bank.has_snapshot == (t > 0)
        assert (trainer.snapshot is not None) == (t > 0)
    assert trainer.model.bank.size == 8


def test_schedule_mismatch_is_a_config_error(tiny_dataset, tiny_config):
    with pytest.raises(ConfigError):
        ContinualTrainer(tiny_dataset, tiny_config.model_copy(update={"classes_per_task": 3}))
    with pytest.raises(ConfigError):
        ContinualTrainer(tiny_dataset, tiny_config.model_copy(update={"dim": 16}))


def test_first_task_has_no_distill_or_contrastive_terms(tiny_dataset, tiny_config):
    trainer = ContinualTrainer(tiny_dataset, tiny_config)
    trainer.begin_task(0, trainer.tasks[0])
    batch = tiny_dataset.indices(Split.TRAIN, trainer.tasks[0].class_ids)[:6]
    parts, old_samples = trainer.compute_losses(batch)
    assert parts.kl_old_tokens.item() == 0.0
    assert parts.ctl_audio.item() == 0.0 and parts.ctl_visual.item() == 0.0
    assert old_samples == 0
    assert parts.ce_new_tokens.item() > 0.0


def prepare_second_task(dataset, cfg) -> tuple[ContinualTrainer, np.ndarray]:
    trainer = ContinualTrainer(dataset, cfg)
    first, second = trainer.tasks[0], trainer.tasks[1]
    trainer.begin_task(0, first)
    old_idx = dataset.indices(Split.TRAIN, first.class_ids)
    buffer_update(trainer.buffer, old_idx, dataset.labels[old_idx], first.class_ids)
    trainer.begin_task(1, second)
    new_idx = dataset.indices(Split.TRAIN, second.class_ids)
    return trainer, np.concatenate([old_idx[:3], new_idx[:3]])


def test_second_task_activates_contrastive_terms(tiny_dataset, tiny_config):
    trainer, batch = prepare_second_task(tiny_dataset, tiny_config)
    parts, old_samples = trainer.compute_losses(batch)
    assert old_samples == 3
    assert abs(parts.kl_old_tokens.item()) <= 1e-12
    assert parts.ctl_audio.requires_grad and parts.ctl_visual.requires_grad
    assert np.isfinite(parts.ctl_audio.item()) and parts.ctl_audio.item() != 0.0


def test_ablation_flags_zero_their_terms(tiny_dataset, tiny_config):
    cfg = tiny_config.model_copy(update={"disable_kl": True, "disable_ce_new": True, "disable_ctl": True})
    trainer, batch = prepare_second_task(tiny_dataset, cfg)
    parts, _ = trainer.compute_losses(batch)
    for term in (parts.kl_old_tokens, parts.ce_new_tokens, parts.ctl_audio, parts.ctl_visual):
        assert term.item() == 0.0 and not term.requires_grad
    assert parts.bce_audio.item() > 0.0


def test_contrastive_needs_both_old_and_new_rows(tiny_dataset, tiny_config):
    trainer, batch = prepare_second_task(tiny_dataset, tiny_config)
    parts, old_samples = trainer.compute_losses(batch[:3])
    assert old_samples == 3 and parts.ctl_audio.item() == 0.0


def test_replay_batches_mix_buffer_samples(tiny_dataset, tiny_config):
    trainer, _ = prepare_second_task(tiny_dataset, tiny_config)
    new_idx = tiny_dataset.indices(Split.TRAIN, trainer.tasks[1].class_ids)
    stored = set(trainer.buffer.indices().tolist())
    for batch in trainer._batches(new_idx):
        assert len(batch) <= tiny_config.batch_size
        assert any(int(i) in stored for i in batch)

    off = ContinualTrainer(tiny_dataset, tiny_config.model_copy(update={"disable_buffer": True}))
    for batch in off._batches(new_idx):
        assert not set(batch.tolist()) - set(new_idx.tolist())


def test_non_finite_loss_aborts_the_step(tiny_dataset, tiny_config, monkeypatch):
    trainer = ContinualTrainer(tiny_dataset, tiny_config)
    trainer.begin_task(0, trainer.tasks[0])
    monkeypatch.setattr(trainer, "compute_losses", lambda batch, rng=None: (LossParts(bce_audio=Tensor(np.nan)), 0))
    with pytest.raises(NonFiniteError):
        trainer._train_step(0, np.arange(2))


def test_event_stream_shape(tiny_dataset, tiny_config):
    events = list(ContinualTrainer(tiny_dataset, tiny_config).run())
    assert events[0].type == TrainEventType.RUN_START
    assert events[-1].type == TrainEventType.RUN_END
    evaluations = [e for e in events if e.type == TrainEventType.EVALUATION]
    assert [len(e.data["rows"]["audio_visual"]) for e in evaluations] == [1, 2]
    starts = [e.data for e in events if e.type == TrainEventType.TASK_START]
    assert [(s["tokens"], s["old_tokens"]) for s in starts] == [(2, 0), (4, 2)]
    steps = [e for e in events if e.type == TrainEventType.STEP]
    assert all(e.data["losses"]["kl_old_tokens"] == 0.0 for e in steps if e.data["task"] == 0)
    assert '"event": "step"' in steps[0].to_json()


def test_run_sequence_is_deterministic(tiny_dataset, tiny_config):
    matrices, report, log = run_sequence(tiny_dataset, tiny_config)
    again, _, log_again = run_sequence(tiny_dataset, tiny_config)
    for m in matrices:
        assert matrices[m].to_list() == again[m].to_list()
    assert log == log_again
    assert matrices[Modality.AUDIO_VISUAL].tasks == 2
    avg, fgt = report.final(Modality.AUDIO_VISUAL)
    assert 0.0 <= avg <= 1.0 and fgt is not None


def test_single_task_reports_no_forgetting(tiny_dataset, tiny_config):
    cfg = tiny_config.model_copy(update={"tasks": 1, "classes_per_task": 4})
    matrices, report, _ = run_sequence(tiny_dataset, cfg)
    m = matrices[Modality.AUDIO_VISUAL]
    avg, fgt = report.final(Modality.AUDIO_VISUAL)
    assert fgt is None and avg == m[0][0]


@pytest.mark.slow
def test_separable_pair_is_learned_in_one_task():
    spec = SyntheticSpec(num_classes=2, dim=8, patches=4, train_per_class=40, val_per_class=0, test_per_class=20, seed=11)
    cfg = TrainConfig(tasks=1, classes_per_task=2, dim=8, patches=4, depth=1, epochs=50, batch_size=16, learning_rate=1e-2, seed=11)
    matrices, _, _ = run_sequence(generate_synthetic(spec), cfg)
    assert matrices[Modality.AUDIO_VISUAL][0][0] >= 0.95


BENCHMARK_SPEC = SyntheticSpec(num_classes=8, dim=32, patches=4, train_per_class=100, val_per_class=0, test_per_class=20, separation=6.0, seed=0)
BENCHMARK_CONFIG = TrainConfig(tasks=4, classes_per_task=2, dim=32, patches=4, depth=3, epochs=30, batch_size=32, learning_rate=5e-3, buffer_capacity=50, seed=0)

BENCHMARK_VARIANTS = {
    "full": {},
    "avctd-only": {"disable_ctl": True},
    "avcg-only": {"disable_kl": True, "disable_ce_new": True},
    "baseline": {"disable_kl": True, "disable_ce_new": True, "disable_ctl": True},
    "hard": {"assignment_mode": AssignmentMode.HARD},
}


@pytest.fixture(scope="module")
def benchmark():
    """按需跑一次各个变体，同一模块内复用结果。返回 (avg, forgetting)"""
    dataset = generate_synthetic(BENCHMARK_SPEC)
    results: dict[str, tuple[float, float | None]] = {}

    def run(variant: str) -> tuple[float, float | None]:
        if variant not in results:
            cfg = BENCHMARK_CONFIG.model_copy(update=BENCHMARK_VARIANTS[variant])
            _, report, _ = run_sequence(dataset, cfg)
            results[variant] = report.final(Modality.AUDIO_VISUAL)
        return results[variant]

    return run


@pytest.mark.slow
def test_desk_benchmark_full_model(benchmark):
    avg, fgt = benchmark("full")
    assert avg >= 0.80
    assert fgt <= 0.15


@pytest.mark.slow
def test_full_model_beats_the_plain_baseline(benchmark):
    full_avg, full_fgt = benchmark("full")
    base_avg, base_fgt = benchmark("baseline")
    assert full_avg > base_avg
    assert full_fgt < base_fgt


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["avctd-only", "avcg-only"])
def test_each_component_alone_lands_between_baseline_and_full(benchmark, variant):
    avg, _ = benchmark(variant)
    assert benchmark("baseline")[0] <= avg <= benchmark("full")[0]


@pytest.mark.slow
def test_soft_assignment_is_not_worse_than_hard(benchmark):
    assert benchmark("full")[0] >= benchmark("hard")[0]
