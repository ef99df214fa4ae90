"""harmkit: train, evaluate, and ensemble small text classifiers for
harm-potential rating (4 classes) and target-identity tagging (5 labels)."""

__version__ = "0.1.0"
