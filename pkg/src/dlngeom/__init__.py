"""Riemannian geometry, entropy and training flows of the deep linear network."""

from .basis import onb_vectors, p_matrix, pushforward_dphi, submersion_report
from .entropy import (
    EntropyValue,
    block_det,
    chebyshev_eigen,
    entropy,
    entropy_gradient,
    entropy_infinite,
    gram_orbit,
    haar_volume_od,
    jacobi_block,
    orbit_volume_formula,
    orbit_volume_numeric,
)
from .errors import (
    CoincidentSingularValues,
    DLNGeometryError,
    NonFinite,
    NotBalanced,
    RankDeficient,
    ReportIOError,
    ShapeMismatch,
    UnsupportedDimension,
)
from .flow import (
    FlowConfig,
    LossSpec,
    Trajectory,
    balanced_flow,
    closed_flow_general,
    free_energy,
    free_energy_flow,
    param_flow,
)
from .linalg import Spectrum, SvdTriple, haar_orthogonal, svd_descending
from .manifold import (
    FrameTuple,
    GaugeElement,
    Network,
    assemble_network,
    balance_residual,
    center_of_fiber,
    end_to_end,
    g_charges,
)
from .metric import MetricOperator, apply_A, eigen_table, metric_gN, volume_density

__version__ = "0.1.0"
