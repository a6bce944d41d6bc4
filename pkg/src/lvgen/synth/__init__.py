from importlib import resources

from .params import (AnatomyParams, ParamDist, PopulationSpec,
                     load_population_spec, save_population_spec, PARAM_ORDER)
from .generator import (SynthDataset, build_mesh, generate_dataset,
                        sharpness_to_exponent, superellipsoid_volume_ml)
from .calibrate import (calibrate_population, expected_cavity_volume,
                        expected_mass)
from .preprocess import (StandardizationStats, compute_standardization,
                         destandardize, split_dataset, split_indices,
                         split_sizes, standardize)


def default_population(phase: str) -> PopulationSpec:
    """Load the packaged calibrated population spec for 'ed' or 'es'."""
    name = f"population_{phase.lower()}.ini"
    ref = resources.files("lvgen.data").joinpath(name)
    with resources.as_file(ref) as path:
        return load_population_spec(path)


__all__ = [
    "AnatomyParams", "ParamDist", "PopulationSpec", "PARAM_ORDER",
    "load_population_spec", "save_population_spec",
    "SynthDataset", "build_mesh", "generate_dataset",
    "sharpness_to_exponent", "superellipsoid_volume_ml",
    "calibrate_population", "expected_cavity_volume", "expected_mass",
    "StandardizationStats", "compute_standardization", "standardize",
    "destandardize", "split_dataset", "split_indices", "split_sizes",
    "default_population",
]
