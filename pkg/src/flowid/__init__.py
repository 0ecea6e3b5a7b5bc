"""flowid: multi-view flow features + hypergraph contrastive traffic classification."""

__version__ = "0.1.0"
