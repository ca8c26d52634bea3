"""Pure-Python alias-method kernels (fallback for ``_alias_ext``).

Same arithmetic, same order: results are bit-identical to the compiled path.
"""

import numpy as np


def build_alias_table(probs):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    k = probs.shape[0]
    kf = float(k)
    scaled = (probs * kf).tolist()
    prob = [1.0] * k
    alias = list(range(k))
    small = []
    large = []
    for i, v in enumerate(scaled):
        if v < 1.0:
            small.append(i)
        else:
            large.append(i)

    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)

    return np.array(prob, dtype=np.float64), np.array(alias, dtype=np.int64)


def alias_draw(prob, alias, uniforms):
    k = prob.shape[0]
    x = np.asarray(uniforms, dtype=np.float64) * float(k)
    col = x.astype(np.int64)
    np.minimum(col, k - 1, out=col)
    frac = x - col
    return np.where(frac < prob[col], col, alias[col])
