"""Data model and on-disk formats for picture-description embedding corpora.

A corpus is a JSON manifest plus one binary embedding container per
modality. Each sample is one picture description: a participant describes
three pictures in their language (English pictures 1-3, Chinese 4-6), and
every modality contributes one embedding row per sample.

Container layout: magic ``MCEB``, version byte 0x01, little-endian uint32
row count, little-endian uint32 dim, then row-major float32 data.
"""

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "CognitiveLabel", "Language", "Gender", "Modality",
    "Sample", "ModalityBlock", "Dataset", "DatasetError",
    "read_container", "write_container",
    "load_dataset", "write_dataset", "import_csv",
    "LANGUAGE_PICTURES",
]

CONTAINER_MAGIC = b"MCEB"
CONTAINER_VERSION = 1


class DatasetError(ValueError):
    """Raised for malformed manifests, containers, or inconsistent corpora."""


class CognitiveLabel(IntEnum):
    NC = 0
    MCI = 1  # positive class for TP/FN accounting


class Language(str, Enum):
    EN = "En"
    ZH = "Zh"


class Gender(str, Enum):
    M = "M"
    F = "F"


class Modality(str, Enum):
    SPEECH = "speech"
    ACOUSTIC = "acoustic"
    TEXT = "text"
    IMAGE = "image"


# picture relabeling: English descriptions cover pictures 1-3, Chinese 4-6
LANGUAGE_PICTURES = {Language.EN: (1, 2, 3), Language.ZH: (4, 5, 6)}


@dataclass
class Sample:
    sample_id: str
    participant_id: str
    picture_id: int
    language: Language
    gender: Gender
    label: CognitiveLabel
    row_index: int


@dataclass
class ModalityBlock:
    """One named dense embedding matrix, rows aligned with the manifest order."""

    modality: Modality
    dim: int
    data: np.ndarray  # float32, shape (n_samples, dim)

    def __eq__(self, other):
        if not isinstance(other, ModalityBlock):
            return NotImplemented
        return (self.modality == other.modality and self.dim == other.dim
                and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data))


@dataclass
class Dataset:
    samples: list = field(default_factory=list)
    blocks: dict = field(default_factory=dict)  # Modality -> ModalityBlock

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.samples == other.samples and self.blocks == other.blocks

    @property
    def modalities(self):
        return list(self.blocks.keys())

    def labels(self):
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def picture_ids(self):
        return np.array([s.picture_id for s in self.samples], dtype=np.int64)

    def feature_matrix(self, modality, sample_ids=None):
        """Float64 feature rows for the given modality, in sample order.

        ``sample_ids`` restricts and orders the rows; default is the full
        corpus in manifest order.
        """
        block = self.blocks[Modality(modality)]
        if sample_ids is None:
            rows = [s.row_index for s in self.samples]
        else:
            by_id = self.sample_index()
            rows = [by_id[sid].row_index for sid in sample_ids]
        return block.data[rows].astype(np.float64)

    def sample_index(self):
        return {s.sample_id: s for s in self.samples}

    def validate(self, source="dataset"):
        """Check hard invariants (errors) and corpus-shape conventions (warnings)."""
        seen = set()
        for i, s in enumerate(self.samples):
            if s.sample_id in seen:
                raise DatasetError(f"{source}: duplicate sample_id {s.sample_id!r} (sample {i})")
            seen.add(s.sample_id)
            if not 1 <= s.picture_id <= 6:
                raise DatasetError(f"{source}: sample {s.sample_id!r} has picture_id {s.picture_id} outside 1..6")
        n = len(self.samples)
        for modality, block in self.blocks.items():
            if block.data.shape != (n, block.dim):
                raise DatasetError(
                    f"{source}: block {modality.value!r} has shape {block.data.shape}, "
                    f"expected ({n}, {block.dim})")
            for s in self.samples:
                if not 0 <= s.row_index < n:
                    raise DatasetError(
                        f"{source}: sample {s.sample_id!r} row_index {s.row_index} out of range for "
                        f"{n}-row block {modality.value!r}")
            bad = ~np.isfinite(block.data)
            if bad.any():
                row = int(np.argwhere(bad)[0][0])
                raise DatasetError(f"{source}: non-finite value in block {modality.value!r} at row {row}")
        self._warn_on_shape(source)

    def _warn_on_shape(self, source):
        # The expected corpus shape (3 pictures per participant, language-coupled
        # picture triples) is a convention, not a hard rule: partial corpora load
        # with a warning.
        by_participant = {}
        for s in self.samples:
            by_participant.setdefault(s.participant_id, []).append(s)
            expected = LANGUAGE_PICTURES[s.language]
            if s.picture_id not in expected:
                warnings.warn(
                    f"{source}: sample {s.sample_id!r} is {s.language.value} but describes picture "
                    f"{s.picture_id} (expected one of {expected})")
        for pid, group in by_participant.items():
            pictures = sorted(s.picture_id for s in group)
            triples = {tuple(LANGUAGE_PICTURES[lang]) for lang in {s.language for s in group}}
            if len(group) != 3 or tuple(pictures) not in triples:
                warnings.warn(
                    f"{source}: participant {pid!r} has pictures {pictures}, "
                    f"expected one full language triple")


def write_container(path, data):
    """Write a float32 matrix in the binary container format."""
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    if arr.ndim != 2:
        raise DatasetError(f"container data must be 2-D, got ndim={arr.ndim}")
    rows, dim = arr.shape
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(bytes([CONTAINER_VERSION]))
        fh.write(struct.pack("<II", rows, dim))
        fh.write(arr.tobytes(order="C"))


def read_container(path):
    """Read a binary embedding container; returns a float32 matrix."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"container file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 13:
        raise DatasetError(f"{path}: truncated container header ({len(raw)} bytes)")
    if raw[:4] != CONTAINER_MAGIC:
        raise DatasetError(f"{path}: bad magic {raw[:4]!r}, expected {CONTAINER_MAGIC!r}")
    if raw[4] != CONTAINER_VERSION:
        raise DatasetError(f"{path}: unsupported container version {raw[4]}")
    rows, dim = struct.unpack_from("<II", raw, 5)
    expected = 13 + 4 * rows * dim
    if len(raw) != expected:
        raise DatasetError(f"{path}: container holds {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=13).reshape(rows, dim).copy()
    return data


def _parse_sample(entry, i, source):
    try:
        return Sample(
            sample_id=str(entry["sample_id"]),
            participant_id=str(entry["participant_id"]),
            picture_id=int(entry["picture_id"]),
            language=Language(entry["language"]),
            gender=Gender(entry["gender"]),
            label=CognitiveLabel[str(entry["label"])],
            row_index=int(entry["row_index"]),
        )
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{source}: bad sample entry at index {i}: {exc}") from exc


def load_dataset(manifest_path):
    """Load and validate a corpus from its manifest.

    Raises DatasetError (with file and row locations) on missing files,
    header/manifest dim mismatches, non-finite embeddings, or duplicate
    sample ids. Corpus-shape conventions only warn.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DatasetError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: not valid JSON: {exc}") from exc

    samples = [_parse_sample(e, i, str(manifest_path))
               for i, e in enumerate(manifest.get("samples", []))]

    blocks = {}
    for spec in manifest.get("modalities", []):
        try:
            modality = Modality(spec["name"])
            declared_dim = int(spec["dim"])
            file_name = str(spec["file"])
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"{manifest_path}: bad modality entry {spec!r}: {exc}") from exc
        container_path = manifest_path.parent / file_name
        data = read_container(container_path)
        if data.shape[1] != declared_dim:
            raise DatasetError(
                f"{container_path}: dim mismatch: manifest declares {declared_dim}, "
                f"container header says {data.shape[1]}")
        if data.shape[0] != len(samples):
            raise DatasetError(
                f"{container_path}: row count {data.shape[0]} does not match "
                f"{len(samples)} manifest samples")
        blocks[modality] = ModalityBlock(modality=modality, dim=declared_dim, data=data)

    ds = Dataset(samples=samples, blocks=blocks)
    ds.validate(source=str(manifest_path))
    return ds


def write_dataset(ds, out_dir):
    """Write manifest + containers; round-trips bit-exactly through load_dataset."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    modalities = []
    for modality in sorted(ds.blocks, key=lambda m: m.value):
        block = ds.blocks[modality]
        file_name = f"{modality.value}.mceb"
        write_container(out_dir / file_name, block.data)
        modalities.append({"name": modality.value, "dim": block.dim, "file": file_name})
    manifest = {
        "samples": [
            {
                "sample_id": s.sample_id,
                "participant_id": s.participant_id,
                "picture_id": s.picture_id,
                "language": s.language.value,
                "gender": s.gender.value,
                "label": s.label.name,
                "row_index": s.row_index,
            }
            for s in ds.samples
        ],
        "modalities": modalities,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def import_csv(samples_csv, embedding_csvs):
    """Build a Dataset from CSV files (for conversion to the binary format).

    ``samples_csv`` must carry the header
    ``sample_id,participant_id,picture_id,language,gender,label``; row order
    defines row_index. ``embedding_csvs`` maps modality name to a headerless
    CSV of float rows aligned with the samples file.
    """
    samples_csv = Path(samples_csv)
    if not samples_csv.exists():
        raise DatasetError(f"samples CSV not found: {samples_csv}")
    expected_header = ["sample_id", "participant_id", "picture_id", "language", "gender", "label"]
    samples = []
    with open(samples_csv, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise DatasetError(
                f"{samples_csv}: header {header} does not match {expected_header}")
        for i, row in enumerate(reader):
            if len(row) != 6:
                raise DatasetError(f"{samples_csv}: row {i + 1} has {len(row)} fields, expected 6")
            entry = dict(zip(expected_header, row))
            entry["row_index"] = i
            samples.append(_parse_sample(entry, i, str(samples_csv)))

    blocks = {}
    for name, path in embedding_csvs.items():
        modality = Modality(name)
        path = Path(path)
        if not path.exists():
            raise DatasetError(f"embedding CSV not found: {path}")
        try:
            data = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
        except ValueError as exc:
            raise DatasetError(f"{path}: could not parse embedding rows: {exc}") from exc
        if data.shape[0] != len(samples):
            raise DatasetError(
                f"{path}: {data.shape[0]} embedding rows for {len(samples)} samples")
        blocks[modality] = ModalityBlock(modality=modality, dim=int(data.shape[1]), data=data)

    ds = Dataset(samples=samples, blocks=blocks)
    ds.validate(source=str(samples_csv))
    return ds
