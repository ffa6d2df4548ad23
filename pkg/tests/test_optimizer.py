import logging

import numpy as np
import pytest

from rateless.capacity import CodeSpec, ThresholdMode, threshold_schedule
from rateless.closed_form import GainMatrix, design_2x2, design_3x3
from rateless.optimizer import (
    OptimizerConfig,
    _Problem,
    default_schedule,
    optimize_gain_matrix,
    shortfall_report,
    success_tolerance,
)
from rateless.tables import REFERENCE_GAIN_10X3, reference_gain_10x3

# Reference percent shortfall of the reference 10x3 matrix, two decimals,
# rows l = 1..3, columns m = 1..10.
REFERENCE_SHORTFALL = np.array([
    [0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],
    [0.00, 0.28, 1.23, 1.46, 1.39, 0.44, 0.59, 0.48, 0.16, 0.23],
    [0.00, 0.29, 1.23, 1.48, 1.40, 0.43, 0.54, 0.51, 0.15, 0.23],
])


class TestShortfallReport:
    def test_perfect_code_has_no_shortfall(self):
        rep = shortfall_report(design_3x3(6.0), CodeSpec.natural(6.0, 3, 3))
        assert rep.max_shortfall < 1e-10
        assert rep.unitarity_residual < 1e-12
        np.testing.assert_allclose(rep.mi, 2.0, atol=1e-12)

    def test_reference_matrix_against_reference_table(self):
        rep = shortfall_report(reference_gain_10x3(), CodeSpec(5.0, 3, 10, 31.0),
                               threshold_schedule(CodeSpec(5.0, 3, 10, 31.0), "layered_bound"))
        np.testing.assert_allclose(rep.grid.T, REFERENCE_SHORTFALL, atol=0.05)
        assert rep.max_shortfall < 1.5

    def test_reference_matrix_rows_have_power_31(self):
        # the reference entries are rounded to 4 decimals
        assert reference_gain_10x3().row_power_residual() < 1e-3
        assert len(REFERENCE_GAIN_10X3) == 10

    def test_grid_clips_surplus(self):
        # a matrix with more power than needed has negative relative deficit
        G = design_2x2(4.0).scaled(30.0)
        rep = shortfall_report(G, CodeSpec.natural(4.0, 2, 2))
        assert np.all(rep.relative < 0)
        assert rep.max_shortfall == 0.0

    def test_shape_check(self):
        with pytest.raises(ValueError):
            shortfall_report(design_2x2(4.0), CodeSpec.natural(4.0, 2, 3))

    def test_defaults(self):
        assert default_schedule(CodeSpec.natural(4, 2, 2)).mode is ThresholdMode.IDEAL
        assert default_schedule(CodeSpec.natural(4, 2, 5)).mode is ThresholdMode.LAYERED_BOUND
        assert success_tolerance(CodeSpec.natural(4, 2, 2)) == 0.1
        assert success_tolerance(CodeSpec.natural(4, 2, 5)) == 2.0


class TestJacobian:
    @pytest.mark.parametrize("shape,w", [((3, 3), 0.0), ((3, 3), 1.0), ((5, 2), 0.0)])
    def test_matches_central_differences(self, shape, w, rng):
        M, L = shape
        spec = CodeSpec.natural(2.0 * L, L, M)
        prob = _Problem(spec, default_schedule(spec), w)
        G = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        theta = prob.pack(np.sqrt(spec.power) * G / np.linalg.norm(G, axis=1, keepdims=True))
        J = prob.jacobian(theta)
        h = 1e-6
        fd = np.empty_like(J)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd[:, k] = (prob.residuals(theta + e) - prob.residuals(theta - e)) / (2 * h)
        np.testing.assert_allclose(J, fd, atol=1e-6 * max(1.0, np.abs(fd).max()))

    def test_pack_unpack(self, rng):
        spec = CodeSpec.natural(6.0, 3, 4)
        prob = _Problem(spec, default_schedule(spec))
        G = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        G = np.sqrt(spec.power) * G / np.linalg.norm(G, axis=1, keepdims=True)
        back = prob.unpack(prob.pack(G))
        # same matrix up to the row/column phase gauge
        np.testing.assert_allclose(np.abs(back), np.abs(G), atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(back, axis=1) ** 2, spec.power)


class TestOptimize:
    def test_2x2_recovers_closed_form_profile(self):
        spec = CodeSpec.natural(4.0, 2, 2)
        G, rep = optimize_gain_matrix(spec, OptimizerConfig(restarts=2))
        oracle = shortfall_report(design_2x2(4.0), spec)
        assert rep.status == "success"
        assert np.max(np.abs(rep.mi - oracle.mi) / oracle.mi) < 1e-4
        # and the magnitudes are those of the unique solution
        np.testing.assert_allclose(G.mag, design_2x2(4.0).mag, rtol=1e-5)

    @pytest.mark.parametrize("L", [3, 4])
    def test_square_small(self, L):
        spec = CodeSpec.natural(2.0 * L, L, L)
        G, rep = optimize_gain_matrix(spec, OptimizerConfig(stop_at_target=True))
        assert rep.max_shortfall <= 0.1
        assert G.row_power_residual() < 1e-12
        assert rep.passed

    def test_three_layers_ten_blocks(self):
        spec = CodeSpec.natural(5.0, 3, 10)
        G, rep = optimize_gain_matrix(spec, OptimizerConfig(stop_at_target=True))
        assert rep.max_shortfall <= 2.0
        assert G.shape == (10, 3)

    def test_deterministic(self):
        spec = CodeSpec.natural(6.0, 3, 4)
        cfg = OptimizerConfig(restarts=2, seed=5)
        G1, r1 = optimize_gain_matrix(spec, cfg)
        G2, r2 = optimize_gain_matrix(spec, cfg)
        assert G1 == G2
        assert r1.objective == r2.objective

    def test_workers_do_not_change_result(self):
        spec = CodeSpec.natural(4.0, 2, 3)
        G1, _ = optimize_gain_matrix(spec, OptimizerConfig(restarts=3, seed=1))
        G2, _ = optimize_gain_matrix(spec, OptimizerConfig(restarts=3, seed=1, workers=3))
        assert G1 == G2

    def test_warm_start(self):
        spec = CodeSpec.natural(6.0, 3, 3)
        G, rep = optimize_gain_matrix(spec, OptimizerConfig(restarts=1), initial=design_3x3(6.0))
        assert rep.max_shortfall < 1e-8

    def test_finite_difference_mode(self):
        spec = CodeSpec.natural(4.0, 2, 2)
        _, rep = optimize_gain_matrix(spec, OptimizerConfig(restarts=1, jacobian="2-point"))
        assert rep.max_shortfall < 1e-3

    def test_nonconvergence_flagged(self, caplog):
        spec = CodeSpec.natural(8.0, 4, 4)
        with caplog.at_level(logging.WARNING):
            _, rep = optimize_gain_matrix(spec, OptimizerConfig(restarts=1, max_iterations=1,
                                                               target=1e-12))
        assert rep.status == "nonconvergence"
        assert not rep.converged and not rep.passed
        assert "misses" in caplog.text

    def test_rejects_more_layers_than_blocks(self):
        with pytest.raises(ValueError):
            optimize_gain_matrix(CodeSpec.natural(4.0, 3, 2))

    @pytest.mark.parametrize("kw", [dict(restarts=0), dict(ftol=0), dict(jacobian="nope"),
                                    dict(workers=0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            OptimizerConfig(**kw)


def test_gain_matrix_output_is_gauge_fixed():
    spec = CodeSpec.natural(4.0, 2, 3)
    G, _ = optimize_gain_matrix(spec, OptimizerConfig(restarts=1))
    assert isinstance(G, GainMatrix)
    assert np.all(G.phase[0] == 0) and np.all(G.phase[:, 0] == 0)
