"""Random rounding to base 3 for confidentialised publication of death counts.

Counts below 6 are rounded to 0 or 6; counts of 6 or more are rounded to one
of the two nearest multiples of 3 (exact multiples are fixed points). The
rounding probabilities make every count unbiased in expectation.
"""

from __future__ import annotations

import numpy as np

from .panels import CountPanel


def round_counts(counts: np.ndarray, seed: int) -> np.ndarray:
    """Randomly round an integer array; deterministic given the seed."""
    c = np.asarray(counts)
    u = np.random.Generator(np.random.Philox(seed)).random(c.shape)
    out = c.copy()

    small = c < 6
    out[small] = np.where(u[small] < c[small] / 6.0, 6, 0)

    rem = c % 3
    up = (~small) & (rem > 0) & (u < rem / 3.0)
    down = (~small) & (rem > 0) & ~(u < rem / 3.0)
    out[up] = c[up] + (3 - rem[up])
    out[down] = c[down] - rem[down]
    return out


def random_round(panel: CountPanel, seed: int) -> CountPanel:
    """Apply random rounding to every cell of a CountPanel."""
    return CountPanel(panel.start, round_counts(panel.counts, seed))
