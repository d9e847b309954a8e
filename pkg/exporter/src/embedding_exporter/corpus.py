"""Raw corpus reading: metadata table plus audio / transcript / image files.

A corpus directory holds ``metadata.csv`` with the header

    sample_id,participant_id,picture_id,language,gender,label,audio,transcript,image

where the last three columns are file paths relative to the corpus root
(columns for unexported modalities may be empty). Audio must be PCM WAV;
images anything Pillow opens; transcripts UTF-8 text.
"""

import csv
import wave
from pathlib import Path

import numpy as np

REQUIRED_COLUMNS = ["sample_id", "participant_id", "picture_id", "language",
                    "gender", "label", "audio", "transcript", "image"]


class CorpusError(ValueError):
    pass


def read_metadata(corpus_dir):
    corpus_dir = Path(corpus_dir)
    meta_path = corpus_dir / "metadata.csv"
    if not meta_path.exists():
        raise CorpusError(f"metadata.csv not found in {corpus_dir}")
    with open(meta_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(REQUIRED_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise CorpusError(f"{meta_path}: missing columns {sorted(missing)}")
        rows = list(reader)
    return rows


def load_wav(path):
    """PCM WAV -> (mono float64 waveform in [-1, 1], sample rate)."""
    with wave.open(str(path), "rb") as wf:
        sr = wf.getframerate()
        n_channels = wf.getnchannels()
        width = wf.getsampwidth()
        frames = wf.readframes(wf.getnframes())
    if width == 2:
        x = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        x = (np.frombuffer(frames, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 4:
        x = np.frombuffer(frames, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise CorpusError(f"{path}: unsupported sample width {width}")
    if n_channels > 1:
        x = x.reshape(-1, n_channels).mean(axis=1)
    return x, sr


def load_transcript(path):
    return Path(path).read_text(encoding="utf-8")


def load_image(path):
    from PIL import Image

    with Image.open(path) as img:
        return img.convert("RGB").copy()
