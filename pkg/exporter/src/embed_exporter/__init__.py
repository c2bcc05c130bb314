"""Transformer embedding exporter for the lsrkit retrieval engine."""

from .export import ExportError, ExportJob, export

__version__ = "0.1.0"
