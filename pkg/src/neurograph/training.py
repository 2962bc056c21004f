"""Training harness: Adam, plateau scheduling, early stopping, k-fold CV.

A cross-validation grid runs one training per (fold, model seed).  Inside
each run, a stratified slice of the training portion is held out to drive
the learning-rate schedule and early stopping; the checkpoint with the
best validation MAE is restored before test evaluation.  Fold x seed
runs are independent, so they can execute in worker processes
(``NEUROGRAPH_THREADS``) and merge deterministically by key.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .dataset import Cohort, SeverityClass
from .encoding import EncodingConfig, assemble_features
from .errors import NumericError
from .model import CompiledGraph, GatModel, ModelConfig, batch_graphs, compile_graph, mse_loss
from .rewiring import RewireConfig, rewire_patient

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    lr0: float = 6.4e-3
    weight_decay: float = 2.25e-4
    plateau_patience: int = 20
    lr_factor: float = 0.5
    early_stop_patience: int = 50
    max_epochs: int = 500
    folds: int = 5
    seeds: int = 5
    val_fraction: float = 0.2
    min_improvement: float = 1e-6

    def __post_init__(self):
        if min(self.batch_size, self.plateau_patience, self.early_stop_patience,
               self.max_epochs, self.seeds) < 1:
            raise ValueError("all counts must be positive")
        if self.lr0 <= 0 or self.weight_decay < 0 or not 0 < self.lr_factor < 1:
            raise ValueError("bad optimizer settings")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


# ---------------------------------------------------------------------------
# Optimizer and scheduler
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              weight_decay: float = 0.0) -> None:
    """One Adam update with L2 decay coupled into the gradient."""
    state.t += 1
    bias1 = 1.0 - ADAM_BETA1**state.t
    bias2 = 1.0 - ADAM_BETA2**state.t
    for key, tensor in params.items():
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {key}")
        if weight_decay:
            g = g + weight_decay * tensor.data
        state.m[key] = ADAM_BETA1 * state.m[key] + (1 - ADAM_BETA1) * g
        state.v[key] = ADAM_BETA2 * state.v[key] + (1 - ADAM_BETA2) * g * g
        m_hat = state.m[key] / bias1
        v_hat = state.v[key] / bias2
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


class PlateauScheduler:
    """Halve the rate after ``patience`` consecutive non-improving epochs."""

    def __init__(self, lr0: float, factor: float = 0.5, patience: int = 20,
                 min_improvement: float = 1e-6):
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.min_improvement = min_improvement
        self.best = np.inf
        self.stale = 0

    def update(self, value: float) -> float:
        if value < self.best - self.min_improvement:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.stale = 0
        return self.lr


# ---------------------------------------------------------------------------
# Splits and metrics
# ---------------------------------------------------------------------------

def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled partition into k folds with sizes differing by at most one."""
    if k > n:
        raise ValueError(f"cannot split {n} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds, start = [], 0
    for size in sizes:
        folds.append(np.sort(perm[start : start + size]))
        start += size
    return folds


def mae(preds, targets) -> float:
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError("mae needs two equal-length nonempty vectors")
    return float(np.mean(np.abs(preds - targets)))


def stratified_val_split(indices: np.ndarray, classes: list[SeverityClass],
                         fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out ~fraction of indices, stratified by severity class.

    Every class with at least two members contributes at least one index
    to the holdout; singleton classes stay in the training part.  If all
    classes are singletons the last index is held out anyway, so tiny
    cohorts still get a validation signal.
    """
    if len(indices) < 2:
        raise ValueError("need at least two indices to carve out a validation set")
    rng = np.random.default_rng(seed)
    train, val = [], []
    by_class: dict[SeverityClass, list[int]] = {}
    for idx in indices:
        by_class.setdefault(classes[idx], []).append(int(idx))
    for cls in sorted(by_class, key=lambda c: c.value):
        members = np.array(by_class[cls])
        members = members[rng.permutation(len(members))]
        n_val = int(round(len(members) * fraction))
        if len(members) >= 2:
            n_val = max(n_val, 1)
        n_val = min(n_val, len(members) - 1)
        val.extend(members[:n_val])
        train.extend(members[n_val:])
    if not val:
        train.sort()
        val.append(train.pop())
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


# ---------------------------------------------------------------------------
# Single training run
# ---------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    best_params: dict
    best_val_mae: float
    best_epoch: int
    stopped_epoch: int
    final_lr: float
    train_losses: list[float] = field(default_factory=list)
    val_maes: list[float] = field(default_factory=list)


def train_single(graphs: list[CompiledGraph], targets: np.ndarray,
                 train_idx: np.ndarray, val_idx: np.ndarray,
                 model_config: ModelConfig, config: TrainConfig,
                 init_seed: int) -> tuple[GatModel, TrainOutcome]:
    """Train one model with plateau scheduling and early stopping on val MAE.

    The regression target is standardized by train-split statistics (the
    network learns in unit scale, predictions map back); metrics and the
    scheduler signal stay on the clinical scale.
    """
    model = GatModel.init(model_config, init_seed)
    model.target_shift = float(targets[train_idx].mean())
    scale = float(targets[train_idx].std())
    model.target_scale = scale if scale > 1e-9 else 1.0
    std_targets = (targets - model.target_shift) / model.target_scale
    model.fit_feature_transform(
        np.concatenate([graphs[i].features for i in train_idx])
    )
    rng = np.random.default_rng(init_seed)
    state = AdamState(model.params)
    scheduler = PlateauScheduler(config.lr0, config.lr_factor,
                                 config.plateau_patience, config.min_improvement)
    val_batch = batch_graphs([graphs[i] for i in val_idx])
    val_targets = targets[val_idx]

    best = TrainOutcome(model.clone_param_data(), np.inf, 0, 0, config.lr0)
    lr = config.lr0
    for epoch in range(1, config.max_epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch = batch_graphs([graphs[i] for i in chunk])
            model.zero_grad()
            pred, _ = model.forward(batch, train=True, rng=rng)
            loss = mse_loss(pred, std_targets[chunk])
            ad.backward(loss)
            grads = {k: t.grad for k, t in model.params.items()}
            adam_step(model.params, grads, state, lr, config.weight_decay)
            epoch_losses.append(loss.item())

        val_raw, _ = model.forward(val_batch)
        val_pred = val_raw.data * model.target_scale + model.target_shift
        val_mae = mae(val_pred, val_targets)
        val_mse = float(np.mean((val_pred - val_targets) ** 2))
        lr = scheduler.update(val_mse)
        best.train_losses.append(float(np.mean(epoch_losses)))
        best.val_maes.append(val_mae)

        if val_mae < best.best_val_mae - config.min_improvement:
            best.best_val_mae = val_mae
            best.best_epoch = epoch
            best.best_params = model.clone_param_data()
        best.stopped_epoch = epoch
        best.final_lr = lr
        if epoch - best.best_epoch >= config.early_stop_patience:
            break

    model.load_param_data(best.best_params)
    return model, best


# ---------------------------------------------------------------------------
# Cross-validation grid
# ---------------------------------------------------------------------------

@dataclass
class FoldReport:
    fold: int
    seed: int
    best_val_mae: float
    test_mae: float
    class_mae: dict[str, float | None]
    class_counts: dict[str, int]
    best_epoch: int
    stopped_epoch: int
    final_lr: float
    param_count: int
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "seed": self.seed,
            "best_val_mae": self.best_val_mae,
            "test_mae": self.test_mae,
            "class_mae": self.class_mae,
            "class_counts": self.class_counts,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "final_lr": self.final_lr,
            "param_count": self.param_count,
            "degenerate": self.degenerate,
        }


@dataclass
class CvResult:
    reports: list[FoldReport]
    aggregate: dict

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.reports],
            "aggregate": self.aggregate,
        }


def prepare_inputs(cohort: Cohort,
                   rewire_config: RewireConfig = RewireConfig(),
                   encoding_config: EncodingConfig = EncodingConfig(),
                   ) -> tuple[list[CompiledGraph], np.ndarray, list[SeverityClass]]:
    """Rewire and encode each patient once; reused across the whole grid."""
    areas = list(cohort.areas)
    graphs = [
        compile_graph(assemble_features(rewire_patient(p, areas, rewire_config), encoding_config))
        for p in cohort.patients
    ]
    targets = np.array([float(p.nihss) for p in cohort.patients])
    classes = [p.severity_class for p in cohort.patients]
    return graphs, targets, classes


def per_class_mae(preds: np.ndarray, targets: np.ndarray,
                  classes: list[SeverityClass]) -> tuple[dict, dict]:
    errors = np.abs(np.asarray(preds) - np.asarray(targets))
    class_mae: dict[str, float | None] = {}
    class_counts: dict[str, int] = {}
    for cls in SeverityClass:
        mask = np.array([c is cls for c in classes])
        class_counts[cls.name] = int(mask.sum())
        class_mae[cls.name] = float(errors[mask].mean()) if mask.any() else None
    return class_mae, class_counts


def _run_cell(args) -> FoldReport:
    (fold_i, seed_i, init_seed, graphs, targets, classes, test_idx, rest_idx,
     model_config, train_config, split_seed, checkpoint_dir) = args
    train_idx, val_idx = stratified_val_split(rest_idx, classes,
                                              train_config.val_fraction, split_seed)
    model, outcome = train_single(graphs, targets, train_idx, val_idx,
                                  model_config, train_config, init_seed)
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir)
        path.mkdir(parents=True, exist_ok=True)
        model.save(path / f"fold{fold_i}_seed{seed_i}.npz")
    test_pred = model.predict([graphs[i] for i in test_idx])
    test_targets = targets[test_idx]
    test_classes = [classes[i] for i in test_idx]
    cls_mae, cls_counts = per_class_mae(test_pred, test_targets, test_classes)
    return FoldReport(
        fold=fold_i,
        seed=seed_i,
        best_val_mae=outcome.best_val_mae,
        test_mae=mae(test_pred, test_targets),
        class_mae=cls_mae,
        class_counts=cls_counts,
        best_epoch=outcome.best_epoch,
        stopped_epoch=outcome.stopped_epoch,
        final_lr=outcome.final_lr,
        param_count=model.param_count,
        degenerate=sum(1 for c in cls_counts.values() if c > 0) < 2,
    )


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    return max(1, int(os.environ.get("NEUROGRAPH_THREADS", "1")))


def run_cv(graphs: list[CompiledGraph], targets: np.ndarray,
           classes: list[SeverityClass],
           model_config: ModelConfig = ModelConfig(),
           train_config: TrainConfig = TrainConfig(),
           base_seed: int = 0,
           workers: int | None = None,
           checkpoint_dir=None,
           log=None) -> CvResult:
    """Run the folds x seeds grid and aggregate test MAE (mean, sample std)."""
    n = len(graphs)
    folds = kfold_split(n, train_config.folds, base_seed)
    all_idx = np.arange(n)
    tasks = []
    for fold_i, test_idx in enumerate(folds):
        rest_idx = np.setdiff1d(all_idx, test_idx)
        for seed_i in range(train_config.seeds):
            init_seed = base_seed + 7919 * fold_i + seed_i + 1
            tasks.append((fold_i, seed_i, init_seed, graphs, targets, classes,
                          test_idx, rest_idx, model_config, train_config,
                          base_seed + fold_i, checkpoint_dir))

    n_workers = _worker_count(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = list(pool.map(_run_cell, tasks))
    else:
        reports = []
        for task in tasks:
            report = _run_cell(task)
            if log is not None:
                log(report)
            reports.append(report)
    reports.sort(key=lambda r: (r.fold, r.seed))

    test_maes = np.array([r.test_mae for r in reports])
    aggregate = {
        "test_mae_mean": float(test_maes.mean()),
        "test_mae_std": float(test_maes.std(ddof=1)) if len(test_maes) > 1 else 0.0,
        "per_class": {},
        "runs": len(reports),
        "param_count": reports[0].param_count,
    }
    for cls in SeverityClass:
        values = [r.class_mae[cls.name] for r in reports if r.class_mae[cls.name] is not None]
        aggregate["per_class"][cls.name] = {
            "mae_mean": float(np.mean(values)) if values else None,
            "mae_std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            "runs_with_class": len(values),
        }
    return CvResult(reports, aggregate)


def constant_predictor_mae(targets: np.ndarray, folds: list[np.ndarray]) -> float:
    """MAE of predicting each fold's train mean; the skill baseline."""
    all_idx = np.arange(len(targets))
    errors = []
    for test_idx in folds:
        train_idx = np.setdiff1d(all_idx, test_idx)
        constant = targets[train_idx].mean()
        errors.extend(np.abs(targets[test_idx] - constant))
    return float(np.mean(errors))
