"""Numerical laboratory for a collision-mixture relaxation equation on
finitely-atomic measures over the nonnegative half line."""

__version__ = "0.1.0"

from .measure import (
    CoarsenReceipt,
    DiscreteMeasure,
    MixingLaw,
    coarsen,
    convolve,
    convolve_power,
    deterministic_mixing_law,
    dirac,
    discretize_exponential,
    discretize_uniform,
    make_measure,
    mixture,
    scale_product,
    uniform_mixing_law,
)
from .collision import (
    ApplyReceipt,
    CollisionModel,
    Finding,
    PowerLawTail,
    apply,
    apply_component,
    contraction_factor,
    moment_growth_bound,
    tjon_wu_model,
    validate_model,
)
from .metrics import (
    Potential,
    ZetaSandwich,
    fortet_mourier,
    kr_potential,
    metric_report,
    rio_check,
    wasserstein1,
    zeta_gap_bound,
    zolotarev_estimate,
    zolotarev_lower,
    zolotarev_upper,
)
from .sampler import RngStream, empirical_apply, sample_measure, sample_zeta
from .solver import (
    FixedPointReport,
    SupportDiagnostics,
    charfn_residual,
    iterate,
    support_diagnostics,
    verify_contraction,
)
from .dynamics import (
    DecayCheck,
    DiscretizationCheck,
    Trajectory,
    decay_check,
    decay_constant,
    discretization_error_check,
    euler_step,
    evolve,
    exp_euler_step,
)
from .cli import Scenario, parse_scenario, parse_scenario_file, run_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
