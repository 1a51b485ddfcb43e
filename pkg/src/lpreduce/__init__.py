"""Few-vector computation of p-summing norms on finite measure spaces."""

__version__ = "0.1.0"

from .empirics import (
    CoveringCurve,
    covering_curve,
    covering_estimate,
    delta_distance,
    dudley_bound,
    entropy_curve,
    fit_scaling,
    gaussian_ell,
    rademacher_enumerate,
    rademacher_sup,
)
from .hypercube import WalshSpace, growth_experiment, tail_identity_operator, walsh_space
from .lewis import (
    LewisConvergenceError,
    LewisResult,
    blend_density,
    lewis_change,
    lewis_density,
    verify_sup_bounds,
)
from .measure import (
    Density,
    EuclideanBall,
    InvalidInput,
    Subspace,
    SupOnPoints,
    VectorSystem,
    WeightedSpace,
    change_density,
    load_instance,
    lp_norm,
    weak_lp_norm,
)
from .sparsify import (
    HalvingError,
    PartitionPair,
    ReductionTrace,
    SplitResult,
    halve,
    measured_distortion,
    partition_distortion,
    reduce,
    sign_partition,
    split_atoms,
)
from .summing import (
    FiniteRankOperator,
    SummingEstimate,
    hilbert_operator,
    hilbert_pi2_exact,
    identity_operator,
    pi_pk_bruteforce,
    pi_pk_lower,
    saturation_curve,
)
