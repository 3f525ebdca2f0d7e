"""Self-supervised pretraining, then fine-tuning with few labels.

The encoder is pretrained on unlabeled subjects by pulling together the
embeddings of two views while decorrelating embedding dimensions.  Only 20%
of subjects keep their labels for fine-tuning; the rest are predicted by
averaging class probabilities over their windows.
"""
from dataclasses import replace

import numpy as np

from gate import GateModel, SynthConfig, TrainConfig, fine_tune, generate_cohort, split_labels, ssl_pretrain
from gate.evaluation import binary_metrics, diagnostic_embedding, singular_value_profile
from gate.signal import all_window_features
from gate.trainer import decide, expand_windows, predict_windows, substream

cohort = generate_cohort(SynthConfig(n_subjects=60, seed=2))
config = replace(TrainConfig(), ssl_epochs=40, ft_epochs=60, label_rate=0.2, seed=2)
feats = all_window_features(cohort, config.augment.window)

model = GateModel.init(feats.shape[2], config.hidden, rng=substream(config.seed, "init"))
before = singular_value_profile(diagnostic_embedding(model, cohort, config))
model, trace = ssl_pretrain(cohort, model, config, rng=substream(config.seed, "augment"))
after = singular_value_profile(diagnostic_embedding(model, cohort, config))
print(f"SSL loss {trace.ssl_loss[0]:.3f} -> {trace.ssl_loss[-1]:.3f} over {config.ssl_epochs} epochs")
print("leading singular values before:", np.round(before[:4], 2), "after:", np.round(after[:4], 2))

labeled, _ = split_labels(cohort, config.label_rate, config.seed)
mask = np.array([r.subject_id in set(labeled) for r in cohort])
labels = np.array([r.meta.label for r in cohort])
rows, _, row_labels = expand_windows(feats[:, mask], labels[mask])
model, ft = fine_tune(model, rows, row_labels, config)
print(f"fine-tuned on {mask.sum()} subjects ({rows.shape[0]} windows); final loss {ft.ft_loss[-1]:.3f}")

probs = predict_windows(model, feats[:, ~mask])
metrics = binary_metrics(probs[:, 1], decide(probs), labels[~mask])
print("held-out:", ", ".join(f"{k} {v:.3f}" for k, v in metrics.items()))
