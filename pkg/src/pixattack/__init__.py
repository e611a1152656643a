"""Black-box adversarial attacks on image classifiers via attention-screened
sparse pixel perturbations and bi-objective evolutionary search."""

from .attack import AttackConfig, AttackReport, bounds_for, run_attack, select_final_ae
from .attention import AttentionMap, ProxyModel, compute_cam, load_attention, seed_proxy
from .images import (
    Image,
    SparsePerturbation,
    apply_perturbation,
    effective_perturbation,
    l2_norm,
    load_image,
    save_image,
)
from .masking import (
    PixelMask,
    VariableIndex,
    binarize,
    build_attack_mask,
    build_index,
    parity_refine,
)
from .nsga2 import (
    BoundedProblem,
    MoeaConfig,
    crowding_distance,
    fast_nondominated_sort,
    run_nsga2,
)
from .oracle import (
    ConvGapOracle,
    CountingOracle,
    HttpOracle,
    LinearSoftmaxOracle,
    OracleResponse,
    SubprocessOracle,
    make_oracle,
)

__version__ = "0.1.0"
