"""k-step interpolation optimizer, adaptive Anderson mixing, baseline
first-order methods, executable convergence certificates, and a seeded
experiment harness."""

from .core import (
    HistoryWindow,
    MixingCoefficients,
    MixingMode,
    Problem,
    StepSchedule,
    as_vector,
    linear_combination,
)
from .optimizers import (
    AdamState,
    OptimizerSpec,
    RunResult,
    TraceRow,
    adam_step,
    init_history,
    interpolatron_step,
    momentum_step,
    nesterov_step,
    run_optimizer,
    sgd_step,
)
from .anderson import (
    GradientBlock,
    anderson_mixing,
    anderson_step,
    gram_matrix,
    projected_mixing_k2,
)
from .problems import (
    BlobsDataset,
    PiecewiseLinear1D,
    PiecewiseProblem1D,
    QuadraticProblem,
    escape_steps,
    make_blobs,
    make_flat_region,
    make_narrow_well,
    max_excursion,
)
from .nets import (
    MlpArchitecture,
    MlpBlobsProblem,
    finite_difference_gradient,
    mlp_gradient,
    mlp_loss,
)
from .theory import (
    CompanionSpec,
    NoCertificateError,
    RateCertificate,
    block_companion_matrix,
    certify,
    characteristic_coeffs,
    companion_matrix,
    contraction_factor,
    dominance_threshold,
    fit_rate,
    max_modulus_root,
)

__version__ = "0.1.0"
