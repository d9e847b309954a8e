"""Synthetic picture-description corpora with planted structure.

Each embedding row is a sum of planted components drawn deterministically
from the seed:

    row = picture_strength * centroid[picture]
        + label_strength   * (+1 for MCI, -1 for NC) * label_direction
        + spurious_bias    * (label sign) * subgroup_shift   (biased language only)
        + noise_std        * gaussian noise

Strengths are in units of the per-coordinate noise standard deviation.
The spurious term models a shortcut feature: within one language subgroup
it correlates with the cognitive label, and regenerating the corpus with
the shift sign flipped (``bias_flipped``) breaks that correlation for
held-out evaluation.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dataset import (CognitiveLabel, Dataset, Gender, Language,
                      LANGUAGE_PICTURES, Modality, ModalityBlock, Sample)
from .numerics import Rng

__all__ = ["SynthConfig", "generate_synthetic", "bias_flipped", "corpus_summary", "DEFAULT_DIMS"]

# Default sizes follow the corpus this mimics: 129 participants (74 MCI / 55 NC),
# 62 English / 67 Chinese, 41 of the English participants MCI; three samples each.
DEFAULT_DIMS = {"speech": 384, "acoustic": 88, "text": 768, "image": 512}


@dataclass
class SynthConfig:
    n_participants: int = 129
    n_mci: int = 74
    n_english: int = 62
    n_english_mci: int = 41
    female_fraction: float = 0.61
    dims: dict = field(default_factory=lambda: dict(DEFAULT_DIMS))
    picture_signal_strength: float = 1.0
    label_signal_strength: float = 1.0
    spurious_subgroup_bias: float = 0.0
    biased_language: str = "Zh"
    bias_sign: float = 1.0
    noise_std: float = 1.0
    # optional per-modality multipliers on the planted components, e.g.
    # {"speech": {"label": 0.0, "spurious": 1.0}}; unset entries default to 1.
    signal_profile: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self):
        if self.n_participants <= 0:
            raise ValueError(f"n_participants must be positive, got {self.n_participants}")
        if not 0 <= self.n_mci <= self.n_participants:
            raise ValueError(f"n_mci={self.n_mci} outside 0..{self.n_participants}")
        if not 0 <= self.n_english <= self.n_participants:
            raise ValueError(f"n_english={self.n_english} outside 0..{self.n_participants}")
        if not 0 <= self.n_english_mci <= min(self.n_mci, self.n_english):
            raise ValueError(f"n_english_mci={self.n_english_mci} inconsistent with "
                             f"n_mci={self.n_mci}, n_english={self.n_english}")
        if self.n_mci - self.n_english_mci > self.n_participants - self.n_english:
            raise ValueError("more Chinese MCI participants requested than Chinese participants")
        if not 0.0 <= self.female_fraction <= 1.0:
            raise ValueError(f"female_fraction={self.female_fraction} outside [0, 1]")
        if not self.dims:
            raise ValueError("dims must name at least one modality")
        for name, dim in self.dims.items():
            Modality(name)
            if int(dim) <= 0:
                raise ValueError(f"dim for modality {name!r} must be positive, got {dim}")
        if self.picture_signal_strength < 0 or self.label_signal_strength < 0:
            raise ValueError("signal strengths must be >= 0")
        if not 0.0 <= self.spurious_subgroup_bias <= 1.0:
            raise ValueError(f"spurious_subgroup_bias={self.spurious_subgroup_bias} outside [0, 1]")
        Language(self.biased_language)
        if self.noise_std <= 0:
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SynthConfig fields: {sorted(unknown)}")
        return cls(**d)


def bias_flipped(cfg):
    """Same corpus, spurious shift sign inverted (breaks the planted shortcut)."""
    return dataclasses.replace(cfg, bias_sign=-cfg.bias_sign)


def _interleaved_genders(count, female_fraction):
    # deterministic even spread of F within a group, no RNG involved
    out = []
    acc = 0.0
    for _ in range(count):
        acc += female_fraction
        if acc >= 1.0 - 1e-9:
            out.append(Gender.F)
            acc -= 1.0
        else:
            out.append(Gender.M)
    return out


def _profile_mult(profile, modality, kind):
    return float(profile.get(modality, {}).get(kind, 1.0))


def generate_synthetic(cfg):
    """Generate a corpus from the planted-structure model; bit-identical per seed."""
    cfg.validate()

    groups = [
        (Language.EN, CognitiveLabel.MCI, cfg.n_english_mci),
        (Language.EN, CognitiveLabel.NC, cfg.n_english - cfg.n_english_mci),
        (Language.ZH, CognitiveLabel.MCI, cfg.n_mci - cfg.n_english_mci),
        (Language.ZH, CognitiveLabel.NC,
         (cfg.n_participants - cfg.n_english) - (cfg.n_mci - cfg.n_english_mci)),
    ]

    width = max(3, len(str(cfg.n_participants)))
    samples = []
    participant_no = 0
    for language, label, count in groups:
        for gender in _interleaved_genders(count, cfg.female_fraction):
            participant_no += 1
            pid = f"P{participant_no:0{width}d}"
            for pic in LANGUAGE_PICTURES[language]:
                samples.append(Sample(
                    sample_id=f"{pid}-p{pic}",
                    participant_id=pid,
                    picture_id=pic,
                    language=language,
                    gender=gender,
                    label=label,
                    row_index=len(samples),
                ))

    n = len(samples)
    label_sign = np.array([1.0 if s.label == CognitiveLabel.MCI else -1.0 for s in samples])
    picture_row = np.array([s.picture_id - 1 for s in samples])
    biased = np.array([1.0 if s.language.value == cfg.biased_language else 0.0 for s in samples])

    root = Rng(cfg.seed)
    blocks = {}
    for modality in Modality:
        if modality.value not in cfg.dims:
            continue
        dim = int(cfg.dims[modality.value])
        structure = root.split("structure", modality.value)
        centroids = structure.normal(size=(6, dim))
        label_dir = structure.normal(size=dim)
        shift_dir = structure.normal(size=dim)
        noise = root.split("noise", modality.value).normal(size=(n, dim))

        pic_mult = cfg.picture_signal_strength * _profile_mult(cfg.signal_profile, modality.value, "picture")
        lab_mult = cfg.label_signal_strength * _profile_mult(cfg.signal_profile, modality.value, "label")
        spur_mult = (cfg.spurious_subgroup_bias * cfg.bias_sign
                     * _profile_mult(cfg.signal_profile, modality.value, "spurious"))

        rows = (pic_mult * centroids[picture_row]
                + lab_mult * label_sign[:, None] * label_dir[None, :]
                + spur_mult * (biased * label_sign)[:, None] * shift_dir[None, :]
                + cfg.noise_std * noise)
        blocks[modality] = ModalityBlock(modality=modality, dim=dim,
                                         data=rows.astype(np.float32))

    ds = Dataset(samples=samples, blocks=blocks)
    ds.validate(source=f"synthetic(seed={cfg.seed})")
    return ds


def corpus_summary(ds):
    """Counts per class, language, and gender, for quick inspection."""
    counts = {
        "samples": len(ds.samples),
        "participants": len({s.participant_id for s in ds.samples}),
        "by_label": {lab.name: 0 for lab in CognitiveLabel},
        "by_language": {lang.value: 0 for lang in Language},
        "by_gender": {g.value: 0 for g in Gender},
        "by_label_language": {f"{lab.name}/{lang.value}": 0
                              for lab in CognitiveLabel for lang in Language},
    }
    for s in ds.samples:
        counts["by_label"][s.label.name] += 1
        counts["by_language"][s.language.value] += 1
        counts["by_gender"][s.gender.value] += 1
        counts["by_label_language"][f"{s.label.name}/{s.language.value}"] += 1
    return counts
