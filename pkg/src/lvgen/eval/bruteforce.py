"""Reference metric implementations: exhaustive nearest-neighbor search,
no spatial index, no tricks.

These are the oracles the accelerated path is checked against bit for bit,
so the arithmetic order here is contractual: per-point squared distances are
dx*dx + dy*dy + dz*dz, per-cloud sums accumulate in vertex order, set-level
means accumulate in index order, and every argmin breaks ties toward the
lowest index.
"""

import numpy as np

from ..errors import ValidationError


def _as_cloud(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape[0] == 0:
        raise ValidationError(f"point cloud must be (N, 3) with N > 0, got {x.shape}")
    return x


def _nn_sums(q, t):
    # running sums of each query point's nearest squared / plain distance
    ssq = 0.0
    sab = 0.0
    for i in range(q.shape[0]):
        dif = t - q[i]
        d = dif[:, 0] * dif[:, 0] + dif[:, 1] * dif[:, 1] + dif[:, 2] * dif[:, 2]
        best = float(np.min(d))
        ssq += best
        sab += float(np.sqrt(best))
    return ssq, sab


def chamfer_brute(x, y, mode: str = "strict") -> float:
    """Chamfer distance between two equally sized clouds.

    strict: sum_x min_y ||x-y||^2 + sum_y min_x ||x-y||^2.
    mm: (1/2)(mean_x min_y ||x-y|| + mean_y min_x ||x-y||), which keeps the
    units of the coordinates.
    """
    x = _as_cloud(x)
    y = _as_cloud(y)
    if x.shape[0] != y.shape[0]:
        raise ValidationError(
            f"chamfer needs equal point counts, got {x.shape[0]} and {y.shape[0]}")
    if mode not in ("strict", "mm"):
        raise ValidationError(f"unknown chamfer mode {mode!r}")
    sxy, axy = _nn_sums(x, y)
    syx, ayx = _nn_sums(y, x)
    if mode == "strict":
        return sxy + syx
    return 0.5 * (axy / x.shape[0] + ayx / y.shape[0])


def coverage_brute(gen, ref) -> float:
    """Fraction of reference clouds that are the nearest neighbor of at
    least one generated cloud; ties go to the lowest reference index."""
    gen = [_as_cloud(g) for g in gen]
    ref = [_as_cloud(r) for r in ref]
    if not gen or not ref:
        raise ValidationError("coverage needs nonempty sets")
    matched = set()
    for g in gen:
        best = np.inf
        bj = -1
        for j, r in enumerate(ref):
            d = chamfer_brute(g, r)
            if d < best:
                best = d
                bj = j
        matched.add(bj)
    return len(matched) / len(ref)


def mmd_brute(gen, ref, mode: str = "strict") -> float:
    """Mean over reference clouds of the distance to the nearest generated
    cloud.

    The neighbor is always chosen by the strict form; mm mode reports the
    mm-scale distance to that same neighbor, so both modes describe the one
    matching.
    """
    gen = [_as_cloud(g) for g in gen]
    ref = [_as_cloud(r) for r in ref]
    if not gen or not ref:
        raise ValidationError("mmd needs nonempty sets")
    if mode not in ("strict", "mm"):
        raise ValidationError(f"unknown chamfer mode {mode!r}")
    total = 0.0
    for r in ref:
        best = np.inf
        bi = -1
        for i, g in enumerate(gen):
            d = chamfer_brute(g, r)
            if d < best:
                best = d
                bi = i
        total += best if mode == "strict" else chamfer_brute(gen[bi], r, "mm")
    return total / len(ref)


def one_nna_brute(gen, ref) -> float:
    """Leave-one-out 1-NN two-sample classification accuracy, in percent.

    A sample is excluded from its own neighbor search by position, not by
    value, so an exact duplicate still sees its twin. Near 50 means the two
    sets are hard to tell apart.
    """
    gen = [_as_cloud(g) for g in gen]
    ref = [_as_cloud(r) for r in ref]
    if len(gen) != len(ref):
        raise ValidationError(
            f"1-NNA needs equal set sizes, got {len(gen)} and {len(ref)}")
    clouds = gen + ref
    half = len(gen)
    correct = 0
    for u in range(len(clouds)):
        best = np.inf
        bv = -1
        for v in range(len(clouds)):
            if v == u:
                continue
            d = chamfer_brute(clouds[u], clouds[v])
            if d < best:
                best = d
                bv = v
        correct += int((u < half) == (bv < half))
    return 100.0 * correct / len(clouds)
