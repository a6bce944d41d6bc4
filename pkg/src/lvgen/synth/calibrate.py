"""Analytic calibration of population means to clinical targets.

Because both surfaces are superellipsoids with closed-form volumes, the
expected cavity volume and mass of a population factor into products of
one-dimensional moments of the (independent, truncated) parameter
distributions. Calibration solves for the endo radius mean (cavity target)
and a joint wall-thickness multiplier (mass target); everything else in
the base spec is left untouched.
"""

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq

from ..mesh import MYOCARDIUM_DENSITY_G_PER_ML
from .generator import sharpness_to_exponent, superellipsoid_volume_ml
from .params import ParamDist, PopulationSpec


def _profile_factor(sharpness):
    # volume of the unit half superellipsoid solid relative to pi*a*b*c
    return np.array([
        superellipsoid_volume_ml(1.0, 1.0, 1.0, sharpness_to_exponent(s)) * 1000.0 / math.pi
        for s in np.atleast_1d(sharpness)])


def expected_cavity_volume(spec: PopulationSpec) -> float:
    """E[cavity volume] in ml over the population, surface noise ignored
    (the noise field has zero mean)."""
    g = spec.params["sharpness"].expect(_profile_factor)
    el, _ = spec.params["elongation"].moments()
    ma, va = spec.params["endo_a"].moments()
    me, _ = spec.params["eccentricity"].moments()
    mc, _ = spec.params["endo_c"].moments()
    return math.pi / 1000.0 * g * el * (ma**2 + va) * me * mc


def expected_mass(spec: PopulationSpec) -> float:
    """E[LV mass] in g: density times expected epi-minus-endo volume."""
    g = spec.params["sharpness"].expect(_profile_factor)
    el, _ = spec.params["elongation"].moments()
    ma, va = spec.params["endo_a"].moments()
    me, _ = spec.params["eccentricity"].moments()
    mc, _ = spec.params["endo_c"].moments()
    mtb, vtb = spec.params["wall_base"].moments()
    mta, _ = spec.params["wall_apex"].moments()
    ea2 = ma**2 + va
    # E[(a+tb)(a*ecc+tb)] with a, ecc, tb independent
    cross = ea2 * me + ma * mtb * (1.0 + me) + (mtb**2 + vtb)
    v_epi = math.pi / 1000.0 * g * el * cross * (mc + mta)
    v_endo = math.pi / 1000.0 * g * el * ea2 * me * mc
    return (v_epi - v_endo) * MYOCARDIUM_DENSITY_G_PER_ML


def _with_shifted_mean(dist: ParamDist, new_mean: float) -> ParamDist:
    """Move the mean, dragging the clip window along (shape preserved)."""
    return ParamDist(mean=new_mean, std=dist.std,
                     lo=new_mean + (dist.lo - dist.mean),
                     hi=new_mean + (dist.hi - dist.mean))


def calibrate_population(base: PopulationSpec, cavity_target_ml: float,
                         mass_target_g: float) -> PopulationSpec:
    """Return a copy of `base` whose expected cavity volume and mass hit
    the targets (to solver precision)."""

    def vol_err(mu_a):
        params = dict(base.params)
        params["endo_a"] = _with_shifted_mean(base.params["endo_a"], mu_a)
        return expected_cavity_volume(replace(base, params=params)) - cavity_target_ml

    mu_a = brentq(vol_err, 5.0, 60.0, xtol=1e-10)
    params = dict(base.params)
    params["endo_a"] = _with_shifted_mean(base.params["endo_a"], mu_a)

    def mass_err(mult):
        trial = dict(params)
        for name in ("wall_base", "wall_apex"):
            trial[name] = _with_shifted_mean(base.params[name],
                                             base.params[name].mean * mult)
        return expected_mass(replace(base, params=trial)) - mass_target_g

    mult = brentq(mass_err, 0.2, 5.0, xtol=1e-10)
    for name in ("wall_base", "wall_apex"):
        params[name] = _with_shifted_mean(base.params[name],
                                          base.params[name].mean * mult)
    return replace(base, params=params, target_cavity_mean=cavity_target_ml,
                   target_mass_mean=mass_target_g)


# shape (std / clip width) choices for the two phases; means are solved.
# ES spreads are wider: the clinical reference stds are ~47% of the mean
# at ES versus ~27% at ED.
_BASE_SHAPES = {
    "ed": dict(
        endo_a=ParamDist(30.5, 3.5, 21.5, 39.5),
        eccentricity=ParamDist(1.0, 0.06, 0.82, 1.18),
        endo_c=ParamDist(80.0, 8.0, 58.0, 102.0),
        wall_base=ParamDist(8.0, 1.2, 4.5, 11.5),
        wall_apex=ParamDist(5.6, 1.0, 2.6, 8.6),
        tilt_x=ParamDist(0.0, 6.0, -18.0, 18.0),
        tilt_y=ParamDist(0.0, 6.0, -18.0, 18.0),
        elongation=ParamDist(1.0, 0.05, 0.85, 1.15),
        sharpness=ParamDist(1.3, 0.2, 1.0, 2.0),
        noise_amp=ParamDist(0.8, 0.3, 0.0, 1.6),
    ),
    "es": dict(
        endo_a=ParamDist(24.0, 4.6, 13.0, 35.0),
        eccentricity=ParamDist(1.0, 0.07, 0.80, 1.20),
        endo_c=ParamDist(70.0, 9.0, 45.0, 95.0),
        wall_base=ParamDist(11.5, 1.8, 6.5, 16.5),
        wall_apex=ParamDist(8.0, 1.4, 3.5, 12.5),
        tilt_x=ParamDist(0.0, 6.0, -18.0, 18.0),
        tilt_y=ParamDist(0.0, 6.0, -18.0, 18.0),
        elongation=ParamDist(1.0, 0.06, 0.82, 1.18),
        sharpness=ParamDist(1.5, 0.25, 1.0, 2.2),
        noise_amp=ParamDist(0.7, 0.3, 0.0, 1.5),
    ),
}

_TARGETS = {"ed": (156.3, 123.0), "es": (83.9, 130.7)}

# sampled-mesh / analytic volume ratio, measured once per release over 500
# draws per phase (per-mesh ratios, so parameter sampling variance cancels):
# the inscribed triangulation plus surface noise undershoots the analytic
# solid by just under 1%. Identical within error for both phases.
MEASURED_VOLUME_BIAS = 0.9915
MEASURED_MASS_BIAS = 0.9925


def base_population(phase: str) -> PopulationSpec:
    """Uncalibrated distribution shapes for one phase."""
    vol, mass = _TARGETS[phase]
    return PopulationSpec(phase=phase, params=dict(_BASE_SHAPES[phase]),
                          target_cavity_mean=vol, target_mass_mean=mass)


def build_calibrated_spec(phase: str, volume_bias: float = MEASURED_VOLUME_BIAS,
                          mass_bias: float = MEASURED_MASS_BIAS) -> PopulationSpec:
    """Calibrate a phase to its clinical targets.

    volume_bias / mass_bias are measured sample-mean / analytic-mean ratios
    (mesh discretization makes sampled solids slightly smaller than the
    analytic superellipsoids); the solver aims at target / bias so the
    sampled population lands on target.
    """
    vol, mass = _TARGETS[phase]
    spec = calibrate_population(base_population(phase), vol / volume_bias,
                                mass / mass_bias)
    return replace(spec, target_cavity_mean=vol, target_mass_mean=mass)
