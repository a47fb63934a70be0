"""Progressive semantic segmentation: autoencoder-routed domain experts."""

from ._pss import (
    Autoencoder,
    DimensionError,
    FormatError,
    InvariantError,
    Registry,
    Segmenter,
    domains,
    generate_dataset,
    iou_per_class,
    run_experiment,
)

__all__ = [
    "Autoencoder",
    "DimensionError",
    "FormatError",
    "InvariantError",
    "Registry",
    "Segmenter",
    "domains",
    "generate_dataset",
    "iou_per_class",
    "run_experiment",
]
