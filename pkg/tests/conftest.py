import math

import numpy as np


def agree_sig_figs(value: float, reference: float, figs: int = 4) -> bool:
    """True when value matches reference within one unit in the figs-th
    significant digit of the reference."""
    if reference == 0.0:
        return abs(value) < 10.0 ** (1 - figs)
    scale = 10.0 ** (math.floor(math.log10(abs(reference))) - figs + 1)
    return abs(value - reference) <= scale


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))
