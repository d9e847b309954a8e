"""Stratified cross-validated training with ablation switches.

A run trains fresh heads per fold: either one joint head on the
concatenated modalities (``fusion="concat"``) or one head per modality
fused multiplicatively (``fusion="poe"``). The contrastive term, when
enabled, acts on the projection of the designated representation - the
joint head's hidden layer in multimodal runs, the modality head's in
unimodal runs - with picture ids as the contrastive labels.

Single-modality runs use the same head under both fusion settings, so the
fusion switch is a no-op there (a product with one expert is that expert).
"""

import dataclasses
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import CognitiveLabel, Modality
from .evaluation import FoldReport, all_subgroup_results, build_run_report
from .losses import cross_entropy, poe_backward, poe_fuse, supcon_loss, SUPCON_VARIANTS
from .model import (adam_step, ffn_backward, ffn_forward, init_adam, init_head,
                    projection_backward, projection_forward)
from .numerics import Rng, log_softmax

__all__ = [
    "ExperimentConfig", "FoldSplit", "stratified_kfold", "train_fold",
    "run_experiment", "ablation_grid", "project_samples", "designated_head",
    "JOINT_HEAD",
]

JOINT_HEAD = "joint"
FUSIONS = ("concat", "poe")
STRATIFY_MODES = ("label", "label_and_language")


@dataclass
class ExperimentConfig:
    k_folds: int = 10
    lr: float = 1e-5
    batch_size: int = 16
    epochs: int = 10
    l2: float = 0.01
    cl_weight: float = 1.0       # weight on the contrastive term
    temperature: float = 0.07
    fusion: str = "poe"
    use_cl: bool = False
    use_image: bool = False
    modalities: list = field(default_factory=lambda: ["speech", "acoustic", "text"])
    supcon_variant: str = "standard"
    include_joint_expert: bool = False
    decoupled_l2: bool = False
    hidden: int = 256
    proj_dim: int = 128
    stratify_by: str = "label"
    group_by_participant: bool = False
    seed: int = 0

    def validate(self):
        if self.k_folds < 2:
            raise ValueError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.use_cl and self.batch_size < 2:
            raise ValueError("contrastive learning needs batch_size >= 2 to form pairs")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.supcon_variant not in SUPCON_VARIANTS:
            raise ValueError(f"supcon_variant must be one of {SUPCON_VARIANTS}")
        if self.stratify_by not in STRATIFY_MODES:
            raise ValueError(f"stratify_by must be one of {STRATIFY_MODES}")
        for m in self.modalities:
            Modality(m)
        if not self.effective_modalities():
            raise ValueError("no modality selected after applying use_image")

    def effective_modalities(self):
        """Selected modalities in canonical order; use_image adds/removes image."""
        chosen = {Modality(m) for m in self.modalities}
        if self.use_image:
            chosen.add(Modality.IMAGE)
        else:
            chosen.discard(Modality.IMAGE)
        return [m for m in Modality if m in chosen]

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["modalities"] = list(self.modalities)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ExperimentConfig fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FoldSplit:
    fold_index: int
    train_ids: list
    val_ids: list


def _stratum_key(cfg, label, language):
    if cfg.stratify_by == "label_and_language":
        return (int(label), language.value)
    return (int(label),)


def stratified_kfold(ds, cfg):
    """Deterministic stratified splits; class share per fold within +-1 unit.

    Units are samples, or whole participants when ``group_by_participant``
    (keeping the three descriptions of one speaker in one fold).
    """
    cfg.validate()
    k = cfg.k_folds

    if cfg.group_by_participant:
        units = {}
        for s in ds.samples:
            units.setdefault(s.participant_id, []).append(s)
        unit_items = [(pid, [s.sample_id for s in group], group[0])
                      for pid, group in units.items()]
    else:
        unit_items = [(s.sample_id, [s.sample_id], s) for s in ds.samples]

    strata = {}
    for unit_id, sample_ids, rep in unit_items:
        key = _stratum_key(cfg, rep.label, rep.language)
        strata.setdefault(key, []).append((unit_id, sample_ids))

    rng = Rng(cfg.seed)
    fold_members = [[] for _ in range(k)]
    fold_totals = [0] * k
    for key in sorted(strata):
        members = sorted(strata[key])
        if len(members) < k:
            raise ValueError(f"stratum {key} has {len(members)} units, "
                             f"fewer than k_folds={k}")
        order = rng.split("kfold", *[str(part) for part in key]).permutation(len(members))
        shuffled = [members[i] for i in order]
        base, rem = divmod(len(shuffled), k)
        # folds with the smallest running totals absorb the remainder
        get_extra = sorted(range(k), key=lambda f: (fold_totals[f], f))[:rem]
        counts = [base + (1 if f in get_extra else 0) for f in range(k)]
        pos = 0
        for f in range(k):
            for _, sample_ids in shuffled[pos:pos + counts[f]]:
                fold_members[f].extend(sample_ids)
                fold_totals[f] += 1
            pos += counts[f]

    all_ids = [s.sample_id for s in ds.samples]
    splits = []
    for f in range(k):
        val = set(fold_members[f])
        splits.append(FoldSplit(
            fold_index=f,
            train_ids=[sid for sid in all_ids if sid not in val],
            val_ids=[sid for sid in all_ids if sid in val],
        ))
    return splits


def _head_plan(cfg):
    """Which heads a config trains, and which one feeds the contrastive loss."""
    effective = cfg.effective_modalities()
    if len(effective) == 1:
        name = effective[0].value
        cl_head = None if effective[0] == Modality.ACOUSTIC else name
        return [name], cl_head, effective
    names = []
    if cfg.fusion == "poe":
        names.extend(m.value for m in effective)
        if cfg.include_joint_expert or cfg.use_cl:
            names.append(JOINT_HEAD)
    else:
        names.append(JOINT_HEAD)
    return names, JOINT_HEAD, effective


def designated_head(cfg):
    """Name of the head whose projection carries the contrastive loss (or None)."""
    _, cl_head, _ = _head_plan(cfg)
    return cl_head


def _build_heads(ds, cfg, rng):
    names, _, effective = _head_plan(cfg)
    dims = {m: ds.blocks[m].dim for m in effective}
    heads = {}
    for name in names:
        in_dim = sum(dims.values()) if name == JOINT_HEAD else dims[Modality(name)]
        heads[name] = init_head(name, in_dim, rng.split("init", name),
                                hidden=cfg.hidden, out_dim=2, proj_dim=cfg.proj_dim)
    return heads


def _forward_fused(heads, cfg, feats, effective):
    """Forward all heads on one batch; returns fused log-probs and caches."""
    caches = {}
    if len(effective) == 1:
        name = effective[0].value
        logits, caches[name] = ffn_forward(heads[name], feats[effective[0]])
        return log_softmax(logits), None, caches
    if cfg.fusion == "concat":
        x = np.concatenate([feats[m] for m in effective], axis=1)
        logits, caches[JOINT_HEAD] = ffn_forward(heads[JOINT_HEAD], x)
        return log_softmax(logits), None, caches
    expert_order = [m.value for m in effective]
    logits_list = []
    for m in effective:
        logits, caches[m.value] = ffn_forward(heads[m.value], feats[m])
        logits_list.append(logits)
    if JOINT_HEAD in heads:
        x = np.concatenate([feats[m] for m in effective], axis=1)
        joint_logits, caches[JOINT_HEAD] = ffn_forward(heads[JOINT_HEAD], x)
        if cfg.include_joint_expert:
            logits_list.append(joint_logits)
            expert_order.append(JOINT_HEAD)
    fused = poe_fuse(logits_list)
    fused._cache["expert_order"] = expert_order
    return fused.fused, fused, caches


def train_fold(ds, split, cfg, eval_ds=None):
    """Train one fold's heads and evaluate on its validation samples.

    ``eval_ds`` optionally substitutes a companion corpus (same sample ids,
    different embeddings) for validation - used to break planted spurious
    correlations at evaluation time.
    """
    cfg.validate()
    effective = cfg.effective_modalities()
    for m in effective:
        if m not in ds.blocks:
            raise ValueError(f"dataset has no block for selected modality {m.value!r}")

    rng = Rng(cfg.seed).split("fold", split.fold_index)
    heads = _build_heads(ds, cfg, rng)
    states = {name: init_adam(head) for name, head in heads.items()}
    _, cl_head, _ = _head_plan(cfg)
    use_cl = cfg.use_cl and cl_head is not None
    if cfg.use_cl and cl_head is None:
        warnings.warn("contrastive term skipped: handcrafted acoustic features "
                      "are not a contrastive target")

    by_id = ds.sample_index()
    train_feats = {m: ds.feature_matrix(m, split.train_ids) for m in effective}
    train_labels = np.array([int(by_id[sid].label) for sid in split.train_ids])
    train_pictures = np.array([by_id[sid].picture_id for sid in split.train_ids])
    n_train = len(split.train_ids)

    loss_curve = []
    for epoch in range(cfg.epochs):
        order = rng.split("shuffle", epoch).permutation(n_train)
        epoch_loss, epoch_count = 0.0, 0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            feats = {m: train_feats[m][idx] for m in effective}
            y = train_labels[idx]

            fused_log_probs, fused, caches = _forward_fused(heads, cfg, feats, effective)
            ce, d_fused = cross_entropy(fused_log_probs, y)

            cl_value = 0.0
            d_wp, d_hidden = None, None
            if use_cl:
                z, pcache = projection_forward(heads[cl_head], caches[cl_head])
                cl_value, dz = supcon_loss(z, train_pictures[idx],
                                           temperature=cfg.temperature,
                                           variant=cfg.supcon_variant)
                d_wp, d_hidden = projection_backward(heads[cl_head], pcache,
                                                     cfg.cl_weight * dz)

            batch_loss = ce + cfg.cl_weight * cl_value
            if not np.isfinite(batch_loss):
                raise FloatingPointError(
                    f"non-finite loss in fold {split.fold_index} epoch {epoch} "
                    f"batch {start // cfg.batch_size}: ce={ce}, contrastive={cl_value}")
            epoch_loss += batch_loss * len(idx)
            epoch_count += len(idx)

            d_logits = {}
            if fused is None:
                only = JOINT_HEAD if cfg.fusion == "concat" and len(effective) > 1 \
                    else effective[0].value
                d_logits[only] = d_fused
            else:
                for name, grad in zip(fused._cache["expert_order"], poe_backward(fused, d_fused)):
                    d_logits[name] = grad

            for name, head in heads.items():
                dlog = d_logits.get(name)
                if dlog is None:
                    dlog = np.zeros((len(idx), head.out_dim))
                extra = d_hidden if (use_cl and name == cl_head) else None
                grads, _ = ffn_backward(head, caches[name], dlog, d_hidden=extra)
                grads["Wp"] = d_wp if (use_cl and name == cl_head) \
                    else np.zeros_like(head.params["Wp"])
                adam_step(head.params, grads, states[name], lr=cfg.lr, l2=cfg.l2,
                          decoupled_l2=cfg.decoupled_l2)
        loss_curve.append(epoch_loss / max(epoch_count, 1))

    eval_source = eval_ds if eval_ds is not None else ds
    predictions = predict(heads, eval_source, cfg, split.val_ids)
    for row in predictions:
        row["fold"] = split.fold_index
    subgroups = all_subgroup_results(predictions, eval_source)
    report = FoldReport(fold_index=split.fold_index, validation_ids=list(split.val_ids),
                        subgroups=subgroups, train_loss_per_epoch=loss_curve)
    report.predictions = predictions  # transient; persisted at run level
    return heads, report


def predict(heads, ds, cfg, sample_ids):
    """Fused per-sample predictions for the given ids."""
    effective = cfg.effective_modalities()
    feats = {m: ds.feature_matrix(m, sample_ids) for m in effective}
    fused_log_probs, _, _ = _forward_fused(heads, cfg, feats, effective)
    by_id = ds.sample_index()
    rows = []
    for i, sid in enumerate(sample_ids):
        rows.append({
            "sample_id": sid,
            "label": int(by_id[sid].label),
            "pred": int(np.argmax(fused_log_probs[i])),
            "p_mci": float(np.exp(fused_log_probs[i, int(CognitiveLabel.MCI)])),
        })
    return rows


def project_samples(heads, ds, cfg, sample_ids):
    """Unit-normalized contrastive projections of the designated head."""
    name = designated_head(cfg)
    if name is None or name not in heads:
        raise ValueError("this configuration has no contrastive projection head")
    effective = cfg.effective_modalities()
    feats = {m: ds.feature_matrix(m, sample_ids) for m in effective}
    if name == JOINT_HEAD:
        x = np.concatenate([feats[m] for m in effective], axis=1)
    else:
        x = feats[Modality(name)]
    _, cache = ffn_forward(heads[name], x)
    z, _ = projection_forward(heads[name], cache)
    return z


def _run_fold_job(args):
    ds, split, cfg, eval_ds, checkpoint_dir = args
    heads, report = train_fold(ds, split, cfg, eval_ds=eval_ds)
    if checkpoint_dir is not None:
        from pathlib import Path

        from .model import save_checkpoint
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        save_checkpoint(Path(checkpoint_dir) / f"fold_{split.fold_index}", heads)
    return report


def run_experiment(ds, cfg, eval_ds=None, jobs=1, checkpoint_dir=None):
    """All folds of one configuration; returns the aggregated RunReport."""
    cfg.validate()
    splits = stratified_kfold(ds, cfg)
    if jobs is None or jobs < 1:
        jobs = len(splits)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(splits))) as pool:
            reports = list(pool.map(_run_fold_job,
                                    [(ds, s, cfg, eval_ds, checkpoint_dir) for s in splits]))
    else:
        reports = [_run_fold_job((ds, s, cfg, eval_ds, checkpoint_dir)) for s in splits]
    reports.sort(key=lambda r: r.fold_index)
    predictions = [row for r in reports for row in getattr(r, "predictions", [])]
    return build_run_report(cfg.to_dict(), reports, predictions)


def ablation_grid(ds, cfg, jobs=1, eval_ds=None):
    """The eight-cell grid {concat,poe} x {+-CL} x {+-IE} with shared folds.

    Every cell inherits the base config's seed, so fold splits are
    identical across cells. Returns (label, RunReport) pairs; the
    concat/-CL/-IE cell is the comparison baseline.
    """
    cells = []
    for fusion in ("concat", "poe"):
        for use_cl in (False, True):
            for use_image in (False, True):
                cell = dataclasses.replace(cfg, fusion=fusion, use_cl=use_cl,
                                           use_image=use_image)
                label = f"{fusion}/{'+' if use_cl else '-'}CL/{'+' if use_image else '-'}IE"
                cells.append((label, run_experiment(ds, cell, eval_ds=eval_ds, jobs=jobs)))
    return cells


def load_config(path):
    """ExperimentConfig from a JSON or TOML file."""
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text.decode("utf-8"))
    else:
        data = json.loads(text.decode("utf-8"))
    return ExperimentConfig.from_dict(data)
