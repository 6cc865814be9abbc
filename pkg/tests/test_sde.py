import math

import numpy as np
import pytest

from cubgreeks import sde
from cubgreeks.algebra import bracket, context, generator, word_degree
from cubgreeks.errors import BlowUpError, ConfigError, DirectionNotAttainableError, DomainError
from cubgreeks.paths import PiecewisePath, from_increments, line_path
from cubgreeks.sde import (
    FieldExpr,
    black_scholes,
    bracket_evaluate,
    bracket_vf,
    build_bracket_table,
    decompose_direction,
    evolve,
    first_variation,
    heisenberg_toy,
    lie_direction,
    load_model,
)

from oracles import fd_jacobian


def reversed_path(path):
    times = path.t_end - path.times[::-1]
    points = path.points[::-1]
    return PiecewisePath(path.t_end, list(zip(times, points)))


def cubic_toy():
    # single-driver system with genuinely nonlinear flow for order checks
    def v0(y):
        return 0.1 * y

    def v1(y):
        return 0.3 + 0.5 * y**3

    return sde.VectorFieldSystem(dim=1, d=1, fields=(v0, v1), name="cubic_toy")


class TestSystems:
    def test_analytic_jacobians_match_fd(self):
        rng = np.random.default_rng(1)
        for system in (black_scholes(0.05, 0.3), heisenberg_toy()):
            for _ in range(10):
                y = rng.uniform(-2, 2, size=system.dim)
                for i in range(system.d + 1):
                    analytic = system.jacobian(i, y)
                    fd = fd_jacobian(lambda z, i=i: system.field(i, z), y, h=1e-5)
                    scale = max(1.0, np.abs(analytic).max())
                    assert np.abs(analytic - fd).max() < 1e-6 * scale

    def test_fd_fallback_jacobian(self):
        system = cubic_toy()
        y = np.array([0.7])
        assert abs(system.jacobian(1, y)[0, 0] - 1.5 * 0.7**2) < 1e-8

    def test_field_count_validated(self):
        with pytest.raises(ConfigError):
            sde.VectorFieldSystem(dim=1, d=2, fields=(lambda y: y,))


class TestEvolve:
    def test_black_scholes_diffusion_line(self):
        # flow along the +e_1 line is the linear ODE y' = sigma y / sqrt(t)
        system = black_scholes(0.05, 0.3)
        t = 0.25
        p = line_path(t, [0.0, math.sqrt(t)])
        out = evolve(system, [1.3], p)
        assert abs(out[0] - 1.3 * math.exp(0.3 * math.sqrt(t))) < 1e-10

    def test_zero_path(self):
        system = heisenberg_toy()
        p = line_path(1.0, [0.0, 0.0, 0.0])
        assert np.allclose(evolve(system, [0.4, -0.2], p), [0.4, -0.2])

    def test_fourth_order_convergence(self):
        system = cubic_toy()
        p = from_increments(1.0, [[0.4, 0.9], [0.6, -0.3]])
        reference = evolve(system, [0.5], p, steps_per_segment=512)
        errors = [
            abs(evolve(system, [0.5], p, steps_per_segment=n)[0] - reference[0])
            for n in (8, 16, 32)
        ]
        ratios = [errors[i] / errors[i + 1] for i in range(2)]
        assert all(r > 11.0 for r in ratios)  # theory: 16

    def test_flow_reversibility(self):
        system = heisenberg_toy()
        rng = np.random.default_rng(3)
        p = from_increments(0.7, rng.uniform(-0.8, 0.8, size=(3, 3)))
        y0 = np.array([0.3, -0.5])
        out = evolve(system, evolve(system, y0, p), reversed_path(p))
        assert np.abs(out - y0).max() < 1e-10

    def test_blow_up_reported(self):
        def v1(y):
            return y * y

        system = sde.VectorFieldSystem(dim=1, d=1, fields=(lambda y: 0.0 * y, v1))
        p = line_path(1.0, [0.0, 5.0])
        with np.errstate(all="ignore"):
            with pytest.raises(BlowUpError):
                evolve(system, [3.0], p)

    def test_rejects_bad_steps(self):
        system = black_scholes(0.0, 0.2)
        with pytest.raises(DomainError):
            evolve(system, [1.0], line_path(1.0, [1.0, 0.0]), steps_per_segment=0)


class TestBrackets:
    def test_heisenberg_analytic(self):
        system = heisenberg_toy()
        assert np.allclose(bracket_vf(system, 1, 2, [0.0, 0.0]), [0.0, 1.0])
        assert np.allclose(bracket_evaluate(system, (1, 2), [0.7, -0.1]), [0.0, 1.0])

    def test_self_bracket_vanishes(self):
        system = black_scholes(0.05, 0.3)
        assert np.allclose(bracket_vf(system, 1, 1, [1.2]), [0.0])

    def test_antisymmetry_fd(self):
        system = cubic_toy()  # finite-difference Jacobians only
        rng = np.random.default_rng(5)
        for _ in range(10):
            y = rng.uniform(-1, 1, size=1)
            lhs = bracket_vf(system, 0, 1, y)
            rhs = bracket_vf(system, 1, 0, y)
            assert np.abs(lhs + rhs).max() < 1e-8

    def test_jacobi_identity_analytic(self):
        system = heisenberg_toy()
        rng = np.random.default_rng(7)
        e = [FieldExpr.base(i) for i in range(3)]
        for _ in range(5):
            y = rng.uniform(-1, 1, size=2)
            total = (
                bracket_vf(system, e[0], FieldExpr.commutator(e[1], e[2]), y)
                + bracket_vf(system, e[1], FieldExpr.commutator(e[2], e[0]), y)
                + bracket_vf(system, e[2], FieldExpr.commutator(e[0], e[1]), y)
            )
            assert np.abs(total).max() < 1e-10

    def test_jacobi_identity_fd(self):
        system = cubic_toy()
        rng = np.random.default_rng(9)
        e = [FieldExpr.base(i) for i in range(2)]
        for _ in range(5):
            y = rng.uniform(-0.5, 0.5, size=1)
            total = (
                bracket_vf(system, e[0], FieldExpr.commutator(e[1], e[0]), y)
                + bracket_vf(system, e[1], FieldExpr.commutator(e[0], e[0]), y)
                + bracket_vf(system, e[0], FieldExpr.commutator(e[0], e[1]), y)
            )
            assert np.abs(total).max() < 1e-6


class TestDecomposition:
    def test_black_scholes_diffusion_direction(self):
        system = black_scholes(0.05, 0.3)
        t = 0.16
        v = [math.sqrt(t) * 0.3 * 1.0]
        coeffs, residual = decompose_direction(system, [1.0], v, t, 2)
        assert residual < 1e-12
        assert set(coeffs) == {(1,)}
        assert abs(coeffs[(1,)] - 1.0) < 1e-12

    def test_zero_direction(self):
        system = black_scholes(0.05, 0.3)
        coeffs, residual = decompose_direction(system, [1.0], [0.0], 0.5, 2)
        assert coeffs == {} and residual == 0.0

    def test_heisenberg_bracket_direction(self):
        system = heisenberg_toy()
        t = 0.2
        coeffs, residual = decompose_direction(system, [0.0, 0.0], [0.0, 1.0], t, 3)
        assert residual < 1e-12
        assert set(coeffs) == {(1, 2)}
        assert abs(coeffs[(1, 2)] - 1.0 / t) < 1e-10

    def test_unattainable_direction(self):
        # at m=2 only degree-1 words are available and V_2 vanishes at 0
        system = heisenberg_toy()
        with pytest.raises(DirectionNotAttainableError) as err:
            decompose_direction(system, [0.0, 0.0], [0.0, 1.0], 0.2, 2)
        assert err.value.residual > 0.1

    def test_scale_consistency(self):
        # fixed v: coefficients scale like t^{-deg/2}
        system = heisenberg_toy()
        c1, _ = decompose_direction(system, [0.0, 0.0], [0.0, 1.0], 1.0, 3)
        c2, _ = decompose_direction(system, [0.0, 0.0], [0.0, 1.0], 2.0, 3)
        assert abs(c2[(1, 2)] - c1[(1, 2)] / 2.0) < 1e-12

    def test_table_excludes_time_word(self):
        table = build_bracket_table(heisenberg_toy(), [0.0, 0.0], 3)
        assert (0,) not in table.entries
        assert all(word_degree(w) <= 2 for w in table.entries)


class TestLieDirection:
    def test_single_letter(self):
        ctx = context(2, 2)
        assert lie_direction(ctx, {(1,): 1.0}) == generator(ctx, 1)

    def test_single_bracket(self):
        ctx = context(2, 2)
        expected = bracket(generator(ctx, 1), generator(ctx, 2))
        assert lie_direction(ctx, {(1, 2): 1.0}) == expected

    def test_round_trip_through_bracket_table(self):
        system = heisenberg_toy()
        y = np.array([0.4, -0.2])
        t = 0.3
        rng = np.random.default_rng(11)
        table = build_bracket_table(system, y, 3)
        coeffs = {w: rng.uniform(-1, 1) for w in table.entries}
        v = sum(
            t ** (word_degree(w) / 2.0) * c * table.entries[w] for w, c in coeffs.items()
        )
        recovered, residual = decompose_direction(system, y, v, t, 3)
        assert residual < 1e-10
        rebuilt = sum(
            t ** (word_degree(w) / 2.0) * c * table.entries[w]
            for w, c in recovered.items()
        )
        assert np.abs(rebuilt - v).max() < 1e-10


class TestFirstVariation:
    def test_zero_path_gives_identity(self):
        system = heisenberg_toy()
        J = first_variation(system, [0.1, 0.2], line_path(1.0, [0.0, 0.0, 0.0]))
        assert np.allclose(J, np.eye(2))

    def test_black_scholes_scalar(self):
        system = black_scholes(0.05, 0.3)
        t = 0.36
        p = line_path(t, [0.0, math.sqrt(t)])
        J = first_variation(system, [1.0], p)
        assert abs(J[0, 0] - math.exp(0.3 * math.sqrt(t))) < 1e-10

    def test_matches_fd_of_evolve(self):
        system = heisenberg_toy()
        rng = np.random.default_rng(13)
        p = from_increments(0.5, rng.uniform(-0.6, 0.6, size=(2, 3)))
        y0 = np.array([0.3, 0.1])
        J = first_variation(system, y0, p)
        J_fd = fd_jacobian(lambda z: evolve(system, z, p), y0, h=1e-6)
        assert np.abs(J - J_fd).max() < 1e-6 * max(1.0, np.abs(J).max())


class TestModelLoading:
    def test_black_scholes_config(self, tmp_path):
        cfg = tmp_path / "bs.json"
        cfg.write_text('{"model":"black_scholes","params":{"r":0.02,"sigma":0.4}}')
        system = load_model(str(cfg))
        assert system.name == "black_scholes"
        assert np.allclose(system.field(1, np.array([2.0])), [0.8])

    def test_heisenberg_config(self):
        system = load_model({"model": "heisenberg_toy"})
        assert system.dim == 2 and system.d == 2

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            load_model({"model": "does_not_exist"})

    def test_missing_parameter(self):
        with pytest.raises(ConfigError):
            load_model({"model": "black_scholes", "params": {"r": 0.1}})

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_model("/nonexistent/model.json")
