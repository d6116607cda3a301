"""Desk-scale experiments: synthetic benchmark, ablation rows, single-sample overfit."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .config import PROFILES
from .data import SyntheticGenConfig, generate_synthetic, stack
from .metrics import mpjpe_metric
from .model import ModelConfig, PoseGrafModel
from .train import TrainSettings, fit, predict_dataset

# (label, model overrides) for the four module-ablation rows
ABLATION_ROWS = [
    ("baseline: J-GCN + encoder", {"enable_bone_gcn": False, "fusion_mode": "off"}),
    ("+ B-GCN, static fusion", {"fusion_mode": "static"}),
    ("+ B-GCN, cross-attention, no fusion", {"fusion_mode": "off"}),
    ("full: B-GCN + dynamic fusion", {"fusion_mode": "dynamic"}),
]


def desk_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **{**PROFILES["desk"], **overrides}).validate()


def desk_benchmark(seed: int = 7, train_count: int = 2000, test_count: int = 200):
    """Fixed synthetic split: the first ``train_count`` samples train, the rest test."""
    samples = generate_synthetic(SyntheticGenConfig(seed=seed, count=train_count + test_count))
    return samples[:train_count], samples[train_count:]


@dataclass
class RunResult:
    label: str
    untrained_mpjpe: float
    final_mpjpe: float
    history: list
    seconds: float


def train_and_eval(label: str, cfg: ModelConfig, train_set, test_set, settings: TrainSettings,
                   seed: int = 0, log_path=None) -> RunResult:
    model = PoseGrafModel(cfg, seed=seed)
    x, y = stack(test_set)
    before = mpjpe_metric(predict_dataset(model, x, settings.flip_test), y)
    t0 = time.perf_counter()
    history = fit(model, train_set, settings, test_set, log_path)
    after = mpjpe_metric(predict_dataset(model, x, settings.flip_test), y)
    return RunResult(label, before, after, history, time.perf_counter() - t0)


def run_ablation(train_set, test_set, settings: TrainSettings, rows=ABLATION_ROWS, seed: int = 0,
                 done: dict | None = None) -> list[RunResult]:
    """Train each ablation row on the same data and seeds. ``done`` maps labels to finished runs."""
    out = []
    for label, kw in rows:
        if done and label in done:
            out.append(done[label])
            continue
        out.append(train_and_eval(label, desk_config(**kw), train_set, test_set, settings, seed))
    return out


def format_ablation(results: list[RunResult]) -> str:
    lines = [f"{'configuration':40s} {'untrained':>10s} {'final':>8s} {'seconds':>8s}"]
    for r in results:
        lines.append(f"{r.label:40s} {r.untrained_mpjpe:10.2f} {r.final_mpjpe:8.2f} {r.seconds:8.1f}")
    return "\n".join(lines)


def overfit_single(epochs: int = 200, lr: float = 0.01, gamma: float = 0.98, seed: int = 0,
                   **model_overrides) -> list[float]:
    """Train the tiny config (D=32, L=2) on one synthetic sample; returns per-epoch loss in mm."""
    sample = generate_synthetic(SyntheticGenConfig(seed=7, count=1))
    cfg = desk_config(dim=32, layers=2, **model_overrides)
    model = PoseGrafModel(cfg, seed=seed)
    settings = TrainSettings(lr=lr, gamma=gamma, epochs=epochs, batch_size=1,
                             flip_augment=False, flip_test=False, seed=seed)
    return [r["train_loss_mm"] for r in fit(model, sample, settings)]

