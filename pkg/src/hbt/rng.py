"""
Named, seedable random streams.

Every random draw in the simulator comes from a stream identified by
(seed, stream name, index), so a run is reproducible and its output does not
depend on how the work is split across workers.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)

STREAM_IDS = {
    "field": 1,
    "trace": 2,
    "thinning_d1": 3,
    "thinning_d2": 4,
    "jitter_d1": 5,
    "jitter_d2": 6,
    "validation": 7,
}


def stream(seed: int, name: str, index: int = 0, *sub: int) -> np.random.Generator:
    """
    Get the generator for one named stream.

    Args:
        seed: Run seed
        name: Stream name, one of STREAM_IDS
        index: Sub-stream index (batch, block or realization number)
        sub: Further nesting, e.g. the detector pair inside a batch

    Returns:
        numpy Generator instance
    """
    if name not in STREAM_IDS:
        raise KeyError(f"Unknown random stream: {name}")
    key = (STREAM_IDS[name], int(index), *(int(s) for s in sub))
    sequence = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.default_rng(sequence)


def fresh_seed() -> int:
    """Draw a seed from OS entropy; callers record it so the run can be replayed."""
    seed = int(np.random.SeedSequence().generate_state(1)[0])
    logger.info(f"Generated seed {seed}")
    return seed


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circular complex Gaussian samples with zero mean and unit mean-square modulus."""
    scale = np.sqrt(0.5)
    return rng.normal(0.0, scale, size) + 1j * rng.normal(0.0, scale, size)
