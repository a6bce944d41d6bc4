"""Population statistics of the clinical scores."""

import numpy as np

from ..errors import ValidationError
from ..mesh import lv_cavity_volume, lv_mass

CLINICAL_METRICS = ("lv_cavity_volume_ml", "lv_mass_g")


def clinical_values(meshes) -> dict:
    """Per-mesh clinical scores, one array per metric."""
    meshes = list(meshes)
    if not meshes:
        raise ValidationError("clinical statistics need at least one mesh")
    return {
        "lv_cavity_volume_ml": np.array([lv_cavity_volume(m) for m in meshes]),
        "lv_mass_g": np.array([lv_mass(m) for m in meshes]),
    }


def relative_error(gen_mean: float, ref_mean: float) -> float:
    if ref_mean == 0.0:
        raise ValidationError("relative error undefined for a zero reference mean")
    return abs(gen_mean - ref_mean) / abs(ref_mean)


def clinical_table(gen_meshes, ref_meshes) -> dict:
    """Mean and spread of each clinical score for both sets, plus the
    relative error of the generated mean against the reference mean.

    Spread is the descriptive standard deviation of the set itself (ddof 0).
    """
    gen = gen_meshes if isinstance(gen_meshes, dict) else clinical_values(gen_meshes)
    ref = ref_meshes if isinstance(ref_meshes, dict) else clinical_values(ref_meshes)
    table = {}
    for name in CLINICAL_METRICS:
        gv = np.asarray(gen[name], dtype=np.float64)
        rv = np.asarray(ref[name], dtype=np.float64)
        if gv.size == 0 or rv.size == 0:
            raise ValidationError("clinical statistics need at least one mesh")
        table[name] = {
            "gen_mean": float(gv.mean()),
            "gen_std": float(gv.std()),
            "ref_mean": float(rv.mean()),
            "ref_std": float(rv.std()),
            "relative_error": relative_error(float(gv.mean()), float(rv.mean())),
        }
    return table
