"""Transformer hidden-state extraction into ntps activation files."""

from .activation_writer import LayerFileWriter
from .extract import ExtractionError, ExtractionJob, ExtractionReport, run
from .text_data import DatasetError, dataset_stem, iter_rows

__version__ = "0.1.0"

__all__ = [
    "DatasetError",
    "ExtractionError",
    "ExtractionJob",
    "ExtractionReport",
    "LayerFileWriter",
    "dataset_stem",
    "iter_rows",
    "run",
    "__version__",
]
