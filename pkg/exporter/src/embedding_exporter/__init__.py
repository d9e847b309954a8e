"""Bridge from raw picture-description corpora (audio, transcripts,
pictures) to the embedding-corpus format the training toolkit consumes."""

from .corpus import CorpusError, read_metadata
from .encoders import DEFAULTS, REGISTRY, EncoderUnavailable, make_encoder
from .export import ExportJob, export

__version__ = "0.1.0"
