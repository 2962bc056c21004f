#!/usr/bin/env python3
"""Train the attention regressor on a small synthetic cohort.

One fold only, reduced epochs: enough to watch validation MAE fall well
below the constant-predictor baseline.  The full protocol (5 folds x 5
seeds) runs via ``neurograph run`` or ``training.run_cv``.
"""

import numpy as np

from neurograph import synth_cohort
from neurograph.model import ModelConfig
from neurograph.training import (
    TrainConfig,
    constant_predictor_mae,
    kfold_split,
    mae,
    prepare_inputs,
    stratified_val_split,
    train_single,
)

cohort = synth_cohort(40, 42)
graphs, targets, classes = prepare_inputs(cohort)
folds = kfold_split(len(cohort), 5, seed=0)
test_idx = folds[0]
rest = np.setdiff1d(np.arange(len(cohort)), test_idx)
train_idx, val_idx = stratified_val_split(rest, classes, fraction=0.2, seed=0)

print(f"train {len(train_idx)} / val {len(val_idx)} / test {len(test_idx)}")
print(f"constant-predictor MAE over 5 folds: "
      f"{constant_predictor_mae(targets, folds):.3f}")

config = TrainConfig(max_epochs=60, early_stop_patience=25)
model, outcome = train_single(graphs, targets, train_idx, val_idx,
                              ModelConfig(), config, init_seed=1)

print(f"parameters: {model.param_count}")
print(f"stopped at epoch {outcome.stopped_epoch}, best epoch {outcome.best_epoch}")
print("validation MAE curve:", [round(v, 2) for v in outcome.val_maes[::5]])

test_pred = model.predict([graphs[i] for i in test_idx])
print(f"test MAE: {mae(test_pred, targets[test_idx]):.3f}")
for pred, target in list(zip(test_pred, targets[test_idx]))[:6]:
    print(f"  predicted {pred:5.1f}   actual {target:4.0f}")
