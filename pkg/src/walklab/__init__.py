"""walklab: structure and asymptotics of random walks on finitely generated groups.

Computes the walk period and its coset decomposition, the index-d normal
subgroup, spectral radius bounds and estimates, ratio limits and limit
measures, and the conditioned (h-) process, over four group backends:
multiplication tables, permutation groups, integer lattices, and free groups.
"""

from .errors import (
    BackendMismatchError,
    CapExceededError,
    ConvergenceError,
    ElementParseError,
    InsufficientDataError,
    LabelConflictError,
    MeasureError,
    StabilizationError,
    WalklabError,
)
from .groups import (
    GroupSpec,
    ball,
    finite_perm,
    finite_table,
    format_elem,
    free_abelian,
    free_group,
    identity,
    inv,
    mul,
    parse_elem,
)
from .measures import (
    IrreducibilityReport,
    SparseMeasure,
    SupportSet,
    convolve,
    delta,
    irreducibility_check,
    measure,
    power,
    power_trace,
    reverse,
    support_power,
    support_set,
    validate,
)
from .periodicity import (
    CosetPartition,
    PeriodReport,
    VerificationReport,
    compute_period,
    compute_return_times,
    coset_labeling,
    gamma0_by_union,
    verify_proposition,
)
from .ratio_limit import (
    BernoulliCheck,
    ChainRatioReport,
    HarmonicFn,
    HProcess,
    LimitMeasureEstimate,
    RatioReport,
    bernoulli_pmf,
    bernoulli_tail_check,
    build_h_process,
    conv_residual,
    constant_harmonic,
    exponential_harmonic,
    generic_chain_ratio,
    h_process_diag,
    harmonic_check,
    harmonic_from_values,
    limit_measure,
    minimal_exponential_harmonic,
    ratio_series,
    reverse_values,
)
from .spectral import (
    SpectralEstimate,
    check_gerl_strict,
    check_supermultiplicativity,
    estimate_spectral,
    laplace_min,
    laplace_argmin,
    laplace_transform,
    radial_chain_sequence,
    return_sequence,
    rho_estimate,
    root_lower_bounds,
    verify_radial_projection,
)

__version__ = "0.1.0"
