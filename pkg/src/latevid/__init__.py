"""Late-interaction text-to-video retrieval at desk scale.

Dual-level MeanMaxSim scoring over frame and temporally contextualized
video features, sigmoid/InfoNCE contrastive training of toy encoders, a
two-level multi-vector index with bit-exact serialization, and an
ablation/benchmark harness on synthetic corpora.
"""

__version__ = "0.1.0"
