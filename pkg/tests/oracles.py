"""Independent numerical oracles shared by the test suite.

Nothing here touches the autograd machinery: forward functions are evaluated
on raw numpy buffers and differentiated by central finite differences, so a
broken backward pass cannot hide behind itself.
"""

import numpy as np


def numeric_grads(f, arrays, h=1e-5):
    """Central finite-difference gradients of scalar-valued f(*arrays).

    Perturbs every element of every array in place (restoring it afterwards)
    and returns one gradient array per input.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(f(*arrays))
            flat[i] = orig - h
            down = float(f(*arrays))
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_grad_err(analytic, numeric, zero_band=1e-5):
    """Worst elementwise relative error between two gradient arrays.

    Entries where both gradients are below ``zero_band`` in magnitude are
    compared absolutely (scaled into the relative budget) so that true-zero
    gradients do not blow up the ratio.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise AssertionError(f"gradient shape mismatch: {a.shape} vs {n.shape}")
    denom = np.maximum(np.abs(a), np.abs(n))
    err = np.abs(a - n)
    small = denom < zero_band
    rel = np.where(small, err * 1e4, err / np.where(small, 1.0, denom))
    return float(rel.max()) if rel.size else 0.0


def assert_grads_close(analytic, numeric, rtol=1e-4):
    err = max_grad_err(analytic, numeric)
    assert err < rtol, f"gradient mismatch: max relative error {err:.3e} >= {rtol}"


def separated_values(rng, shape, min_gap=1e-3, scale=1.0):
    """Random array whose values are pairwise farther apart than min_gap.

    Used for maxpool and relu gradient checks, where finite differences are
    only valid away from ties and kinks.
    """
    n = int(np.prod(shape))
    vals = rng.standard_normal(n) * scale
    for _ in range(1000):
        order = np.sort(vals)
        gaps = np.diff(order)
        if vals.size < 2 or (gaps.min() > min_gap and np.abs(vals).min() > min_gap):
            return vals.reshape(shape)
        vals = rng.standard_normal(n) * scale
    raise RuntimeError("could not draw well-separated values")
