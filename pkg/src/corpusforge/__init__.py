"""corpusforge: build normalized corpora, QA pairs, and training datasets
from raw scientific publications."""

__version__ = "0.1.0"
