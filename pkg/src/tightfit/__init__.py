"""Tightness-field body fitting: geometry, group equivariance, and solvers."""

from ._kernels import USING_NATIVE, lane_name
from .body_model import (BodyParams, BodyTemplate, MarkerSet, StickConfig,
                         load_model, make_stick_model, marker_jacobian,
                         marker_positions, pose_mesh, posed_joints,
                         regress_joints, rest_mesh, save_model)
from .errors import (DegenerateAverageError, NonConvergenceError,
                     NumericalError, ValidationError)
from .fitting import (FitConfig, FitResult, aggregate_markers, chamfer_refine,
                      fit_body_to_markers)
from .groupequiv import (EquivFeature, InvFeature, RotationGroup,
                         average_rotation, decode_direction, equiv_descriptor,
                         group_permutation, icosahedral_group, invariant_pool,
                         predict_directions)
from .meshgeo import (SurfaceSample, SurfaceSampleSet, TriMesh,
                      geodesic_distance, geodesic_nearest, point_to_surface,
                      ray_cast, ray_intersect, read_obj, sample_surface,
                      write_obj)
from .metrics import (MetricReport, angular_error, chamfer_bidirectional,
                      mpjpe, shape_mae, v2v)
from .synth import ClothingProfile, synth_scan
from .tightness import (CorrespondenceMap, NoiseConfig, TightnessField,
                        build_correspondence, ground_truth_field, losses,
                        oracle_predict, select_markers)

__version__ = "0.1.0"
