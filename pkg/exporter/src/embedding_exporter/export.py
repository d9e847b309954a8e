"""Run the selected encoders over a corpus and write the embedding corpus.

Samples with missing or unreadable media for any selected modality are
skipped with a per-sample log line; the remaining samples export with
contiguous row indices. Re-running on the same corpus with the same
encoder choices is byte-identical.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (CorpusError, load_image, load_transcript, load_wav,
                     read_metadata)
from .encoders import make_encoder
from .formats import write_container, write_manifest

logger = logging.getLogger("embedding_exporter")

MEDIA_COLUMN = {"speech": "audio", "acoustic": "audio",
                "text": "transcript", "image": "image"}
MODALITY_ORDER = ("speech", "acoustic", "text", "image")


@dataclass
class ExportJob:
    corpus_dir: str
    out_dir: str
    modalities: list = field(default_factory=lambda: list(MODALITY_ORDER))
    encoders: dict = field(default_factory=dict)   # modality -> encoder name
    pooling: str = "mean"                          # mean | first

    def validate(self):
        for m in self.modalities:
            if m not in MODALITY_ORDER:
                raise ValueError(f"unknown modality {m!r}; choices: {MODALITY_ORDER}")
        if self.pooling not in ("mean", "first"):
            raise ValueError(f"pooling must be 'mean' or 'first', got {self.pooling!r}")


def _load_media(corpus_dir, row, modality):
    rel = row.get(MEDIA_COLUMN[modality], "").strip()
    if not rel:
        raise CorpusError(f"no {MEDIA_COLUMN[modality]} path")
    path = Path(corpus_dir) / rel
    if not path.exists():
        raise CorpusError(f"{path} does not exist")
    if modality in ("speech", "acoustic"):
        return load_wav(path)
    if modality == "text":
        return load_transcript(path)
    return load_image(path)


def export(job):
    """Encode the corpus and write manifest + containers; returns the
    manifest path and the list of skipped sample ids."""
    job.validate()
    modalities = [m for m in MODALITY_ORDER if m in set(job.modalities)]
    rows = read_metadata(job.corpus_dir)

    kept, media, skipped = [], {m: [] for m in modalities}, []
    for row in rows:
        loaded = {}
        try:
            for m in modalities:
                loaded[m] = _load_media(job.corpus_dir, row, m)
        except (CorpusError, OSError) as exc:
            logger.warning("skipping sample %s: %s", row.get("sample_id"), exc)
            skipped.append(row.get("sample_id"))
            continue
        kept.append(row)
        for m in modalities:
            media[m].append(loaded[m])
    if not kept:
        raise CorpusError("no exportable samples in the corpus")

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_modalities = []
    for m in modalities:
        encoder = make_encoder(m, job.encoders.get(m), pooling=job.pooling)
        matrix = encoder.encode(media[m])
        if matrix.shape[0] != len(kept):
            raise RuntimeError(f"{m} encoder returned {matrix.shape[0]} rows "
                               f"for {len(kept)} samples")
        file_name = f"{m}.mceb"
        write_container(out_dir / file_name, matrix)
        manifest_modalities.append(
            {"name": m, "dim": int(matrix.shape[1]), "file": file_name})
        logger.info("exported %s via %s: %d x %d", m, encoder.name,
                    matrix.shape[0], matrix.shape[1])

    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, kept, manifest_modalities)
    return manifest_path, skipped
