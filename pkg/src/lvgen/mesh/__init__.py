from .topology import TemplateTopology, build_shell_template, ENDO, EPI, BASAL_RIM
from .core import Mesh, PointCloud, to_point_cloud, validate_mesh
from .geometry import (
    signed_volume,
    capped_surface,
    lv_cavity_volume,
    lv_mass,
    MYOCARDIUM_DENSITY_G_PER_ML,
)
from .io import read_obj, write_obj, read_mdt, write_mdt

__all__ = [
    "TemplateTopology",
    "build_shell_template",
    "ENDO",
    "EPI",
    "BASAL_RIM",
    "Mesh",
    "PointCloud",
    "to_point_cloud",
    "validate_mesh",
    "signed_volume",
    "capped_surface",
    "lv_cavity_volume",
    "lv_mass",
    "MYOCARDIUM_DENSITY_G_PER_ML",
    "read_obj",
    "write_obj",
    "read_mdt",
    "write_mdt",
]
