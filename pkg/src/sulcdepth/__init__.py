"""Scale-invariant sulcal depth (DPF*) on triangle meshes.

The core estimator solves ``(S + α M) D = 2 M K`` with the cotangent
stiffness ``S``, the lumped mass ``M`` and the mean curvature ``K``; the
scale-invariant variant adapts ``α`` and normalizes ``D`` by the cube root of
the enclosed volume.
"""

__version__ = "0.1.0"

from .depth import (DepthMap, SolverConfig, adapt_alpha, compute_depth, dpf, dpf_star, dpf_star_abs,
                    green_impulse, spectral_check, sulc)
from .errors import SulcDepthError
from .landmarks import LandmarkSet, directional_lines, load_landmarks
from .mesh import TriangleMesh, characteristic_length, load_mesh, save_field, save_mesh, scale_mesh
from .metrics import MetricReport, dev, ipr, sep, std_crest
from .operators import cotan_stiffness, mass_matrix, mean_curvature
from .stats import distance_matrix, ks_two_sample, subgroup_ks_profile, wasserstein1d

__all__ = [
    "DepthMap", "LandmarkSet", "MetricReport", "SolverConfig", "SulcDepthError", "TriangleMesh",
    "adapt_alpha", "characteristic_length", "compute_depth", "cotan_stiffness", "dev",
    "directional_lines", "distance_matrix", "dpf", "dpf_star", "dpf_star_abs", "green_impulse",
    "ipr", "ks_two_sample", "load_landmarks", "load_mesh", "mass_matrix", "mean_curvature",
    "save_field", "save_mesh", "scale_mesh", "sep", "spectral_check", "std_crest",
    "subgroup_ks_profile", "sulc", "wasserstein1d",
]
