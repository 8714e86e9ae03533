"""Matrix-valued covariance models of multivariate random fields.

Models for the matrix of covariances between field components are built as
expression trees of claimed building blocks: pseudo cross-variograms and CND
kernels go in, positive definite cross-covariance constructions come out.
Claims attached at construction are numerically certified by the validation
module, sampled from by the simulation module, and everything is scriptable
through JSON configs and the ``covkit`` command line tool.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CovkitError,
    DomainError,
    EvaluationError,
    NotPositiveSemidefiniteError,
    SpecError,
)
from .linalg import (
    SymMatrix,
    bessel_k,
    beta,
    cholesky_jittered,
    exp_integral_ei,
    log_gamma,
    min_eigenvalue,
)
from .kernels import (
    BlockMatrix,
    KernelKind,
    KernelSpec,
    PointSet,
    assemble_gram,
    claims_cnd,
    claims_pcv,
    claims_pd,
    combine_schur,
    combine_sum,
    constant_kernel,
    constant_shift,
    cross_variogram_lmc,
    evaluate_block,
    evaluate_pairs,
    exp_isotropic,
    make_spec,
    radial_profile_raw,
    scale,
    zero_kernel,
)
from .pseudo import (
    pcv_bernstein,
    pcv_bounded,
    pcv_delay,
    pcv_from_cross_variogram,
    pcv_from_g_and_c,
    pcv_nested_spacetime,
    pcv_oesting,
    pcv_power,
    pcv_transport,
)
from .mixtures import (
    laplace2d_record,
    laplace_record,
    mixture_gauss_legendre_2d,
    mixture_nodes,
)
from .stationary import (
    cm_derivative_cov,
    cosh_ratio,
    fonseca_steel,
    gaussian_extended,
    hadamard_power,
    increment_cov,
    infdiv_ratio,
    isotropic_descent,
    lagrangian_mixture,
    laplace2d_mixture,
    matern_mixture,
    ratio_product_model,
    schoenberg_exp,
    second_derivative_cov,
    toy_ei_model,
    transport_mixture,
    triple_laplace,
)
from .nonstationary import (
    anisotropy_field,
    askey_beta,
    nonstationary_matern,
    paciorek_mixture,
    smoothness_field,
)
from .validation import (
    ValidationConfig,
    ValidationReport,
    Witness,
    adversarial_search,
    check_cnd,
    check_pd,
    check_pseudo_variogram,
    recheck_witness,
    schoenberg_equivalence,
    schoenberg_roundtrip,
)
from .simulation import (
    EmpiricalPcv,
    Realization,
    batch_standard_error,
    empirical_pcv,
    pcv_theory,
    sample_gaussian,
)
from .config import (
    canonical_json,
    config_hash,
    parse_model,
    serialize_model,
)
