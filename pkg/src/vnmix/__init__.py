"""Mixing and decay of positive L1-contractions on finite-dimensional von Neumann algebras."""

__version__ = "0.1.0"

from .algebra import (
    Algebra,
    Element,
    Projection,
    absolute,
    dual_positivity_check,
    is_positive,
    l1_norm,
    make_algebra,
    max_projection_mass,
    spectral_decompose,
    trace,
)
from .dynamics import (
    classify_completely_mixing,
    classify_mixing,
    dichotomy,
    rho_bar,
    rho_bar_estimate,
    smoothing_profile,
    trace_zero_basis,
    verify_ksn,
)
from .errors import *  # noqa: F401,F403
from .superop import (
    SuperOp,
    adjoint_superop,
    check_abs_domination,
    check_l1_contraction,
    check_positive,
    certify,
    from_function,
    from_kraus,
    from_matrix,
    iterate,
    positive_fixed_point,
    spectrum,
)
