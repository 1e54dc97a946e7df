"""CompILE segmentation and imitation toolkit."""

from ._core import (
    Dataset,
    Model,
    boundary_accuracy,
    f1_score,
    generate_dataset,
    segment_probs_and_masks,
    surprisal_boundaries,
    train_compile,
    train_surprisal,
    truncated_poisson,
)

__all__ = [
    "Dataset",
    "Model",
    "boundary_accuracy",
    "f1_score",
    "generate_dataset",
    "segment_probs_and_masks",
    "surprisal_boundaries",
    "train_compile",
    "train_surprisal",
    "truncated_poisson",
]
