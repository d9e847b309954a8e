"""Multimodal MCI-detection training toolkit on precomputed embeddings.

Per-modality feed-forward heads, supervised contrastive learning on
picture labels, log-space product-of-experts fusion, and stratified
cross-validated evaluation with subgroup reporting. Works on real embedding
corpora (binary containers + JSON manifest) and on synthetic corpora with
planted structure.
"""

from .dataset import (CognitiveLabel, Dataset, DatasetError, Gender, Language,
                      Modality, ModalityBlock, Sample, import_csv, load_dataset,
                      write_dataset)
from .evaluation import (ConfusionMatrix, MetricSet, RunReport, compute_metrics,
                         disparity, picture_separability, report_from_json,
                         report_to_json, subgroup_metrics)
from .losses import cross_entropy, poe_fuse, supcon_loss, total_loss
from .model import AdamState, FfnHead, adam_step, ffn_backward, ffn_forward, init_head
from .numerics import Rng, grad_check, log_softmax, matmul
from .synthetic import SynthConfig, bias_flipped, generate_synthetic
from .training import (ExperimentConfig, FoldSplit, run_experiment,
                       stratified_kfold, train_fold)

__version__ = "0.1.0"
