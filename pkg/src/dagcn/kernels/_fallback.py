"""Pure-numpy implementations of the segment kernels.

Used when the compiled extension is unavailable (or DAGCN_NO_EXT is set).
Accumulation runs in edge-array order, matching the compiled loops bitwise.
"""

import numpy as np


def segment_sum(values, segments, n_segments):
    out = np.zeros((n_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, segments, values)
    return out


def segment_sum_1d(values, segments, n_segments):
    out = np.zeros(n_segments, dtype=np.float64)
    np.add.at(out, segments, values)
    return out


def segment_max(values, segments, n_segments):
    out = np.full((n_segments, values.shape[1]), -np.inf, dtype=np.float64)
    np.maximum.at(out, segments, values)
    arg = np.full((n_segments, values.shape[1]), -1, dtype=np.int64)
    # Reverse scan so the first edge attaining the maximum wins ties.
    for e in range(values.shape[0] - 1, -1, -1):
        hit = values[e] == out[segments[e]]
        arg[segments[e], hit] = e
    return out, arg
