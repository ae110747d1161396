"""Compute-budgeted scheduling and simulation for multi-stream violence detection.

The package is organized around a small set of immutable domain types
(:mod:`vigil.core`), pure frame preprocessing (:mod:`vigil.preprocess`),
a pluggable detector contract with a wire protocol for external detector
processes (:mod:`vigil.detector`), the probability-driven priority
scheduler (:mod:`vigil.scheduler`), audio feature extraction and fuzzy
score fusion (:mod:`vigil.audio`), a deterministic discrete-cycle
simulator (:mod:`vigil.simulate`), and a staged pipeline runtime plus
CLI (:mod:`vigil.pipeline`, :mod:`vigil.cli`).
"""

__version__ = "0.1.0"
