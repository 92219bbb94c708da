"""Upper and lower estimates of Lipschitz constants of feedforward nets."""

from .core import SvdResult, as_tensor, random_orthogonal, random_unit_vector, svd_dense
from .errors import (
    CyclicGraph,
    DepthTooSmall,
    DimensionTooLarge,
    EmptyDataset,
    InputError,
    LipboundError,
    NonFinite,
    NumericalError,
    OffsetOutOfRange,
    ParseError,
    RatioUndefined,
    SchemaViolation,
    ShapeMismatch,
    TooLarge,
    TooWide,
    UnboundedPartial,
    WidthExceeded,
)
from .graph import (
    ComputationGraph,
    GraphNode,
    LipBoundTrace,
    autolip,
    autolip_sequential,
    classify_constants,
    net_to_graph,
)
from .io import (
    graph_from_json,
    load_graph_json,
    load_lnm,
    random_cnn,
    random_net,
    save_lnm,
)
from .lower import (
    AnnealingSchedule,
    SearchDomain,
    annealing_lower_bound,
    dataset_lower_bound,
    grid_lower_bound,
    jacobian_norm_at,
    load_points_csv,
)
from .operators import (
    Activation,
    AffineOperator,
    Conv2dOperator,
    DenseOperator,
    SequentialNet,
    average_pooling_operator,
    jacobian_apply_at,
)
from .report import BoundReport
from .seqlip import (
    SeqLipFactor,
    alignment_factor,
    decompose,
    exact_lipschitz_two_layer,
    factor_norm,
    gated_matrix,
    ideal_net,
    seqlip_exact,
    seqlip_greedy,
    sigma_gradient,
    theorem3_bound,
)
from .spectral import (
    PowerConfig,
    SingularTriplet,
    frobenius_upper_bound,
    operator_norm,
    power_method,
    top_k_singular,
)

__version__ = "0.1.0"
