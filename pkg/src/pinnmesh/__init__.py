"""Structured 2-D mesh generation on the unit parameter square.

A small neural network learns the map from (xi, eta) in [0,1]^2 to
physical (x, y) coordinates by minimizing elliptic smoothness residuals
together with boundary and auxiliary-line fitting terms.  Classical
transfinite interpolation and an iterative elliptic solver are included
as baselines, along with mesh quality evaluation and file I/O.
"""

__version__ = "0.1.0"

from .classical import (BoundaryDiscretization, discretize_boundary,
                        elliptic_smooth, tfi)
from .errors import (DegenerateCell, DivergedIteration, EmptyBatch,
                     EmptyTrainingSet, InvalidGeometry, MeshFileError,
                     NonFiniteGradient, NonFiniteLoss, PinnMeshError)
from .geometry import (AuxiliaryLine, BoundaryFit, ControlPolyline,
                       GeometrySpec, RegressionTree, build_boundary_fit,
                       fit_regression_tree, geometry_from_dict,
                       load_geometry, parameterize_boundary,
                       sample_auxiliary, sample_boundary, validate_geometry)
from .jets import Jet2
from .losses import (Batch, LossBreakdown, loss_bcs, loss_data, loss_eqns,
                     residual_eqns, total_loss, total_loss_grad,
                     winslow_coeffs)
from .mesh import StructuredMesh
from .meshfiles import (read_mesh, read_p3d, read_vtk, render_svg,
                        write_mesh, write_p3d, write_svg, write_vtk)
from .network import (MeshNetParams, forward, forward_jet,
                      forward_jet_batch, generate_mesh, init_params,
                      load_checkpoint, save_checkpoint)
from .optim import TrainConfig, TrainHistory, lbfgs_minimize, train
from .quality import (ComparisonSummary, QualityReport, cell_angles,
                      compare_reports, evaluate_mesh)

__all__ = [
    "__version__",
    "AuxiliaryLine", "Batch", "BoundaryDiscretization", "BoundaryFit",
    "ComparisonSummary", "ControlPolyline", "DegenerateCell",
    "DivergedIteration", "EmptyBatch", "EmptyTrainingSet", "GeometrySpec",
    "InvalidGeometry", "Jet2", "LossBreakdown", "MeshFileError",
    "MeshNetParams", "NonFiniteGradient", "NonFiniteLoss", "PinnMeshError",
    "QualityReport", "RegressionTree", "StructuredMesh", "TrainConfig",
    "TrainHistory", "build_boundary_fit", "cell_angles", "compare_reports",
    "discretize_boundary", "elliptic_smooth", "evaluate_mesh",
    "fit_regression_tree", "forward", "forward_jet", "forward_jet_batch",
    "generate_mesh", "geometry_from_dict", "init_params", "lbfgs_minimize",
    "load_checkpoint", "load_geometry", "loss_bcs", "loss_data", "loss_eqns",
    "parameterize_boundary", "read_mesh", "read_p3d", "read_vtk",
    "render_svg", "residual_eqns", "sample_auxiliary", "sample_boundary",
    "save_checkpoint", "tfi", "total_loss", "total_loss_grad", "train",
    "validate_geometry", "winslow_coeffs", "write_mesh", "write_p3d",
    "write_svg", "write_vtk",
]
