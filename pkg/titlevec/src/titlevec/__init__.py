"""Batch title encoding into the disambiguation pipeline's vector format."""

from .encoder import DEFAULT_MODEL, EncoderUnavailable, HashEncoder, TransformerEncoder, make_encoder
from .export import ExportJob, export_vectors, read_title_csv

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL",
    "EncoderUnavailable",
    "ExportJob",
    "HashEncoder",
    "TransformerEncoder",
    "export_vectors",
    "make_encoder",
    "read_title_csv",
]
