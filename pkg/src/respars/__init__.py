"""Spectral sparsification by effective resistance, and attention GNNs that
train on the sparsified graph."""

__version__ = "0.1.0"

from .effres import (  # noqa: E402
    ResistanceTable,
    SketchConfig,
    approx_resistances,
    cache_load,
    cache_store,
    exact_resistances,
    foster_check,
)
from .errors import (  # noqa: E402
    CacheFormatError,
    ConvergenceError,
    InconsistentRHSError,
    NotSymmetricError,
    ParseError,
    ResparsError,
    ShapeError,
    StaleCacheError,
    ZeroDegreeError,
)
from .gnn import (  # noqa: E402
    LayerSpec,
    ModelConfig,
    attention_matrix,
    fastgat_forward,
    forward,
    gat_layer_forward,
    gcn_forward,
    init_params,
    plan_subgraphs,
    prop1_equivalence_check,
)
from .graph import Graph, build_laplacian, connected_components, parse_edge_list  # noqa: E402
from .linalg import cg_solve_laplacian, jacobi_eigh, pinv_laplacian, sym_eig  # noqa: E402
from .sparsifier import (  # noqa: E402
    SparsifyConfig,
    expectation_check,
    sample_count,
    sample_sparsifier,
    spectral_check,
)
from .synth import SBMSpec, sbm  # noqa: E402
from .theory import lemma1_check, theorem1_check, theorem2_check, weight_drift_experiment  # noqa: E402
from .train import (  # noqa: E402
    AdaptiveConfig,
    TrainConfig,
    adaptive_train,
    backprop_gradients,
    cross_entropy_loss,
    finite_diff_gradcheck,
    micro_f1,
    train,
)
