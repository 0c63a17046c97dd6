"""Batch export of pretrained VGGish audio embeddings into `.sere` files."""

from vggish_extractor.extract import ExtractionJob, batch_extract, extract_all

__all__ = ["ExtractionJob", "batch_extract", "extract_all"]
