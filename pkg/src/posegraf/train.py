"""Training loop: seeded shuffling, flip augmentation, Adam with per-epoch decay."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .metrics import evaluate, mpjpe_metric
from .model import PoseGrafModel, loss_mpjpe, predict_with_flip_ensemble
from .skeleton import horizontal_flip

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 0.001
    gamma: float = 0.96
    epochs: int = 40
    batch_size: int = 16
    flip_augment: bool = True
    flip_test: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _as_arrays(dataset):
    if isinstance(dataset, tuple):
        x, y = dataset
    else:
        x = np.stack([s.joints_2d for s in dataset])
        y = np.stack([s.joints_3d for s in dataset])
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train_epoch(model: PoseGrafModel, dataset, adam: ad.AdamState, batch_size: int,
                flip_augment: bool, rng: np.random.Generator) -> float:
    """One pass over ``dataset`` (samples or an ``(x2d, y3d)`` pair); returns mean batch loss in mm."""
    x, y = _as_arrays(dataset)
    if len(x) == 0:
        raise ValueError("empty dataset")
    order = rng.permutation(len(x))
    flips = rng.random(len(x)) < 0.5 if flip_augment else np.zeros(len(x), dtype=bool)
    params = model.params
    losses = []
    for start in range(0, len(x), batch_size):
        idx = order[start : start + batch_size]
        xb, yb = x[idx].copy(), y[idx].copy()
        f = flips[idx]
        if f.any():
            xb[f] = horizontal_flip(xb[f], model.topo)
            yb[f] = horizontal_flip(yb[f], model.topo)
        with ad.Tape() as tape:
            loss = loss_mpjpe(model.forward(xb), yb)
            tape.backward(loss)
        value = float(loss.data)
        if not np.isfinite(value):
            raise FloatingPointError("NaN loss encountered during training")
        ad.adam_step(params, adam)
        ad.zero_grads(params.values())
        losses.append(value)
    adam.epoch_decay()
    return float(np.mean(losses))


def predict_dataset(model: PoseGrafModel, x2d, flip_test: bool = True, batch_size: int = 256) -> np.ndarray:
    x2d = np.asarray(x2d, dtype=np.float64)
    out = []
    for start in range(0, len(x2d), batch_size):
        chunk = x2d[start : start + batch_size]
        if flip_test:
            out.append(predict_with_flip_ensemble(model, chunk, model.topo))
        else:
            out.append(model.predict(chunk))
    return np.concatenate(out) if out else np.zeros((0, model.topo.num_joints, 3))


def fit(model: PoseGrafModel, train_set, settings: TrainSettings, test_set=None, log_path=None) -> list[dict]:
    """Train for ``settings.epochs`` epochs; optionally write the per-epoch CSV loss log."""
    rng = np.random.default_rng(settings.seed)
    adam = ad.AdamState(lr=settings.lr, gamma=settings.gamma)
    history = []
    test = _as_arrays(test_set) if test_set is not None else None
    fh = open(log_path, "w", encoding="utf-8", newline="\n") if log_path else None
    try:
        if fh:
            fh.write("epoch,lr,train_loss_mm,eval_mpjpe_mm\n")
        for epoch in range(1, settings.epochs + 1):
            lr = adam.lr
            loss = train_epoch(model, train_set, adam, settings.batch_size, settings.flip_augment, rng)
            ev = float("nan")
            if test is not None:
                ev = mpjpe_metric(predict_dataset(model, test[0], settings.flip_test), test[1])
            row = {"epoch": epoch, "lr": lr, "train_loss_mm": loss, "eval_mpjpe_mm": ev}
            history.append(row)
            log.info("epoch %d lr %.6g loss %.3f eval %.3f", epoch, lr, loss, ev)
            if fh:
                fh.write(f"{epoch},{lr!r},{loss!r},{ev!r}\n")
                fh.flush()
    finally:
        if fh:
            fh.close()
    return history


def evaluate_model(model: PoseGrafModel, samples, flip_test: bool = True):
    x = np.stack([s.joints_2d for s in samples])
    y = np.stack([s.joints_3d for s in samples])
    pred = predict_dataset(model, x, flip_test)
    return evaluate(pred, y, [s.action for s in samples])
