"""Writers for the downstream toolkit's on-disk corpus interface.

Container: magic ``MCEB``, version byte 0x01, little-endian uint32 row
count, little-endian uint32 dim, row-major float32 payload. Manifest:
UTF-8 JSON with ``samples`` (sample_id, participant_id, picture_id,
language, gender, label, row_index) and ``modalities`` (name, dim, file).
"""

import json
import struct

import numpy as np

CONTAINER_MAGIC = b"MCEB"
CONTAINER_VERSION = 1


def write_container(path, data):
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"container data must be 2-D, got ndim={arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(bytes([CONTAINER_VERSION]))
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def write_manifest(path, samples, modalities):
    manifest = {
        "samples": [
            {
                "sample_id": s["sample_id"],
                "participant_id": s["participant_id"],
                "picture_id": int(s["picture_id"]),
                "language": s["language"],
                "gender": s["gender"],
                "label": s["label"],
                "row_index": i,
            }
            for i, s in enumerate(samples)
        ],
        "modalities": modalities,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
