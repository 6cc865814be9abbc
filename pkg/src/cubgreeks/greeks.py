"""One-step and iterated cubature estimates for expectations and Greeks.

The one-step Greek applies a derivative-flavor formula directly; the iterated
scheme differentiates only over the first (small) step and chains expectation
formulas over the remaining partition, multiplying weights along the branches
of the resulting evaluation tree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from . import algebra, cubature, sde
from .algebra import context
from .errors import (
    BudgetExceededError,
    DomainError,
    NoFormulaFoundError,
    UnsupportedDegreeError,
)
from .paths import line_path

DEFAULT_LEAF_CAP = 10**6


@dataclass(frozen=True)
class GreekRequest:
    """One iterated-scheme run: stage-0 Greek step plus expectation steps.

    ``partition`` lists the step sizes s_0..s_k (sum t); ``m`` is the Greek
    degree used over s_0 and ``m_prime`` the expectation degree for the rest.
    """

    system: sde.VectorFieldSystem
    payoff: object
    y: tuple
    v: tuple
    t: float
    m: int
    m_prime: int
    partition: tuple
    steps_per_segment: int = sde.DEFAULT_STEPS_PER_SEGMENT
    leaf_cap: int = DEFAULT_LEAF_CAP
    threads: int = 1

    def __post_init__(self):
        steps = np.asarray(self.partition, dtype=float)
        if steps.size < 1 or np.any(steps <= 0.0):
            raise DomainError("partition steps must all be positive")
        if abs(steps.sum() - self.t) > 1e-9 * max(1.0, self.t):
            raise DomainError(f"partition sums to {steps.sum()}, expected t={self.t}")


@dataclass(frozen=True)
class GreekResult:
    estimate: float
    paths_evaluated: int
    formula_residuals: tuple

    def to_dict(self):
        return {
            "estimate": self.estimate,
            "leaves": self.paths_evaluated,
            "residuals": list(self.formula_residuals),
        }


def expectation_formula(d, m_prime, t):
    """Built-in expectation formula for the requested degree, or raise."""
    if 1 <= m_prime <= 3:
        return cubature.expectation_degree3(context(d, 3), t)
    if m_prime == 5 and d == 1:
        return cubature.expectation_degree5_d1(context(1, 5), t)
    raise UnsupportedDegreeError(
        f"no built-in expectation formula for m'={m_prime}, d={d} (built-ins: m'<=3 any d, m'=5 d=1)"
    )


def expectation_one_step(system, f, y, t, m_prime, steps_per_segment=sde.DEFAULT_STEPS_PER_SEGMENT):
    """Sum lambda_j f(Y_t^y(omega_j)) over the built-in expectation formula."""
    formula = expectation_formula(system.d, m_prime, t)
    values = [
        w * float(f(sde.evolve(system, y, p, steps_per_segment)))
        for w, p in formula.items
    ]
    return math.fsum(values)


def build_greek_formula(system, y, v, t, m):
    """Decompose v into brackets at y and construct the matching formula.

    Degree-1 decompositions at m <= 2 use the two-point pair along the unit
    direction w/|w|, with |w| carried by the weights: the moment target is
    linear in w, and keeping the trajectories at unit scale keeps the
    cubature remainder O(|w| t^{(m+1)/2}) instead of O((|w| sqrt t)^{m+1}),
    which is what makes fixed-direction Greeks (|w| ~ t^{-k/2}) converge.
    For |w| = 1 this is exactly the closed-form two-point construction.
    Anything else goes through the sign-free solver over the default
    dictionary (fixed paths, so weights are linear in v there too).
    Returns (formula, decomposition coefficients).
    """
    coeffs, _ = sde.decompose_direction(system, y, v, t, m)
    ctx = context(system.d, m)
    w = sde.lie_direction(ctx, coeffs)
    degrees = {algebra.word_degree(word) for word in coeffs}
    if not coeffs:
        return cubature.GreeksFormula(ctx, t, w, ()), coeffs
    if m <= 2 and degrees <= {1}:
        w_vec = np.array([w.coeff((i,)) for i in range(1, ctx.d + 1)])
        norm = float(np.linalg.norm(w_vec))
        inc = np.concatenate([[0.0], math.sqrt(t) * w_vec / norm])
        # exact +-norm/2 weights keep the constant-payoff estimate at literal zero
        items = (
            (0.5 * norm, line_path(t, inc)),
            (-0.5 * norm, line_path(t, -inc)),
        )
        formula = cubature.GreeksFormula(ctx, t, algebra.dilate(math.sqrt(t), w), items)
        residual = cubature.max_residual(formula)
        if residual > cubature.VERIFY_TOL:
            raise NoFormulaFoundError(
                f"two-point residual {residual:.3e}", best_residual=residual
            )
    else:
        formula = cubature.greeks_solve(
            ctx, w, t, cubature.default_greeks_dictionary(ctx, t)
        )
    return formula, coeffs


def _map_ordered(func, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def greek_iterated(request: GreekRequest) -> GreekResult:
    """Evaluate the full tree: Greek step over s_0, expectation steps after.

    Weights multiply along branches and states chain through evolve; leaf
    contributions are reduced with fsum in sorted leaf order, so results do
    not depend on the thread count.
    """
    system = request.system
    y0 = np.asarray(request.y, dtype=float)
    steps = [float(s) for s in request.partition]

    stage0, _ = build_greek_formula(system, y0, request.v, steps[0], request.m)
    inner = [expectation_formula(system.d, request.m_prime, s) for s in steps[1:]]

    leaves = max(len(stage0.items), 1)
    for formula in inner:
        leaves *= len(formula.items)
    if leaves > request.leaf_cap:
        raise BudgetExceededError(
            f"evaluation tree needs {leaves} leaves > cap {request.leaf_cap}",
            required=leaves,
            cap=request.leaf_cap,
        )

    residuals = [cubature.max_residual(stage0)]
    residuals.extend(cubature.max_residual(f) for f in inner)

    spp = request.steps_per_segment
    nodes = _map_ordered(
        lambda item: (item[0], sde.evolve(system, y0, item[1], spp)),
        list(stage0.items),
        request.threads,
    )
    for formula in inner:
        items = list(formula.items)

        def expand(node):
            weight, state = node
            return [
                (weight * lam, sde.evolve(system, state, p, spp)) for lam, p in items
            ]

        expanded = _map_ordered(expand, nodes, request.threads)
        nodes = [leaf for branch in expanded for leaf in branch]

    estimate = math.fsum(w * float(request.payoff(state)) for w, state in nodes)
    return GreekResult(
        estimate=estimate,
        paths_evaluated=len(nodes),
        formula_residuals=tuple(residuals),
    )


def greek_one_step(
    system,
    f,
    y,
    v,
    t,
    m,
    steps_per_segment=sde.DEFAULT_STEPS_PER_SEGMENT,
    leaf_cap=DEFAULT_LEAF_CAP,
) -> GreekResult:
    """Single-interval Greek estimate: sum mu_j f(Y_t^y(omega_j))."""
    request = GreekRequest(
        system=system,
        payoff=f,
        y=tuple(np.asarray(y, dtype=float)),
        v=tuple(np.asarray(v, dtype=float)),
        t=t,
        m=m,
        m_prime=3,
        partition=(t,),
        steps_per_segment=steps_per_segment,
        leaf_cap=leaf_cap,
    )
    return greek_iterated(request)


def gamma_partition(t, s0, k, gamma):
    """Step sizes [s_0, s_1..s_k] with t_i = s_0 + (t-s_0)(1 - (1 - i/k)^gamma).

    gamma = 1 gives uniform inner steps; larger gamma shrinks the later steps
    toward t, matching the (t - t_i)^{-m'/2} weighting of the error bound.
    """
    if not (0.0 < s0 < t):
        raise DomainError(f"need 0 < s0 < t, got s0={s0}, t={t}")
    if k < 1:
        raise DomainError(f"need k >= 1 inner steps, got {k}")
    if gamma < 1.0:
        raise DomainError(f"need gamma >= 1, got {gamma}")
    knots = [s0 + (t - s0) * (1.0 - (1.0 - i / k) ** gamma) for i in range(k)]
    knots.append(t)
    steps = [s0]
    steps.extend(knots[i + 1] - knots[i] for i in range(k))
    return steps
