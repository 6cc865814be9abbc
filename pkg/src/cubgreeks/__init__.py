"""Cubature on Wiener space: weighted deterministic ODE solves that reproduce
expectations and Greeks of Stratonovich SDE solutions, with Monte Carlo
oracles for verification."""

from .algebra import (
    AlgebraContext,
    TensorElement,
    context,
    heat_element,
    lie_basis,
    word_degree,
)
from .cubature import (
    CubatureFormula,
    GreeksFormula,
    expectation_degree3,
    expectation_degree5_d1,
    greek_target,
    greeks_solve,
    greeks_two_point,
    rescale_formula,
    verify_moments,
)
from .greeks import (
    GreekRequest,
    GreekResult,
    expectation_one_step,
    gamma_partition,
    greek_iterated,
    greek_one_step,
)
from .mc import (
    McConfig,
    Payoff,
    bs_closed_form,
    covariance_diagnostics,
    euler_expectation,
    fd_greek,
    malliavin_delta_m1,
    signature_expectation_mc,
)
from .paths import PiecewisePath, scale_path, segment_signature, signature
from .sde import (
    VectorFieldSystem,
    black_scholes,
    bracket_evaluate,
    bracket_vf,
    decompose_direction,
    evolve,
    first_variation,
    heisenberg_toy,
    lie_direction,
    load_model,
)

__version__ = "0.1.0"
