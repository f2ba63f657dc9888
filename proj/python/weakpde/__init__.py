"""Weak-form identification of sparse PDEs from noisy scattered samples."""

from ._core import (
    bump,
    default_library,
    evaluate_checkpoint,
    format_pde,
    generate,
    parse_term,
    run_training,
    solve_preset,
    __version__,
)

__all__ = [
    "bump",
    "default_library",
    "evaluate_checkpoint",
    "format_pde",
    "generate",
    "parse_term",
    "run_training",
    "solve_preset",
    "__version__",
]
