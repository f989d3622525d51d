"""Step learning-rate schedule."""


def lr_at(iteration: int, base_lr: float = 0.01, decay: float = 0.1, decay_every: int = 120_000) -> float:
    """base_lr * decay ** (iteration // decay_every)."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    return base_lr * decay ** (iteration // decay_every)


def scaled_decay_interval(total_iterations: int, reference_total: int = 160_000,
                          reference_interval: int = 120_000) -> int:
    """Decay interval rescaled proportionally to a shorter run."""
    return max(1, round(total_iterations * reference_interval / reference_total))
