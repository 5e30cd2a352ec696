"""Batch sentence-embedding encoder for the EMB1 store format."""

from .encoding import EncodeJob, encode, read_store, read_texts, write_store

__version__ = "0.1.0"
