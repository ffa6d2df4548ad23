import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rateless.capacity import CodeSpec
from rateless.power_alloc import (
    PowerAllocation,
    allocate_powers,
    conservative_rate,
    efficiency_lower_bound,
    extend_allocation,
    layer_shortfalls,
    per_block_snr,
    verify_allocation,
)

# Reference powers, two decimals, rows l = 1..4, columns m = 1..5, and gains in dB.
REFERENCE_POWERS = np.array([
    [3.00, 40.80, 48.98, 55.77, 58.79],
    [12.00, 86.70, 61.21, 60.58, 61.65],
    [48.00, 86.70, 81.32, 71.48, 67.50],
    [192.00, 40.80, 63.48, 67.16, 67.06],
])
REFERENCE_GAINS_DB = [0.00, -12.30, -16.78, -19.29, -20.99]


class TestReferenceTable:
    def test_powers(self, reference_allocation):
        np.testing.assert_allclose(reference_allocation.powers.T, REFERENCE_POWERS, atol=0.005 + 1e-9)

    def test_gains(self, reference_allocation):
        np.testing.assert_allclose(reference_allocation.thresholds.gains_db, REFERENCE_GAINS_DB,
                                   atol=0.005 + 1e-9)

    def test_first_block_is_a_layered_code(self, reference_allocation):
        # block 1: each layer sees SNR 2^(R/L) - 1 = 3 with everything below as noise
        np.testing.assert_allclose(reference_allocation.powers[0], [3, 12, 48, 192], rtol=1e-12)

    def test_rows_sum_to_power(self, reference_allocation):
        np.testing.assert_allclose(reference_allocation.powers.sum(axis=1), 255.0, rtol=1e-12)

    def test_residuals(self, reference_allocation):
        assert np.max(np.abs(verify_allocation(reference_allocation))) < 1e-12

    def test_second_block_by_hand(self):
        # independent recomputation of block 2 from the recursion definition
        P, g2 = 255.0, (2 ** 4 - 1) / 255.0
        p1 = np.array([3.0, 12.0, 48.0, 192.0])
        below = np.concatenate([[0.0], np.cumsum(p1)[:-1]])
        have = np.log2(1 + g2 * p1 / (g2 * below + 1))
        delta = 2.0 - have
        p2, acc = [], 0.0
        for d in delta:
            p2.append((2 ** d - 1) * (acc + 1 / g2))
            acc += p2[-1]
        alloc = allocate_powers(CodeSpec(8.0, 4, 2, P))
        np.testing.assert_allclose(alloc.powers[1], p2, rtol=1e-12)


class TestProperties:
    @settings(max_examples=40)
    @given(st.floats(0.2, 4.0), st.integers(1, 6), st.integers(1, 12))
    def test_conservation_and_positivity(self, r, L, M):
        spec = CodeSpec.natural(r * L, L, M)
        alloc = allocate_powers(spec)
        assert np.all(alloc.powers >= 0)
        np.testing.assert_allclose(alloc.powers.sum(axis=1), spec.power, rtol=1e-9)
        assert np.max(np.abs(verify_allocation(alloc))) < 1e-9

    def test_fifty_blocks(self):
        alloc = allocate_powers(CodeSpec(8.0, 4, 50, 255.0))
        np.testing.assert_allclose(alloc.powers.sum(axis=1), 255.0, atol=1e-6)

    def test_single_layer(self):
        alloc = allocate_powers(CodeSpec.natural(3.0, 1, 4))
        np.testing.assert_allclose(alloc.powers[:, 0], 7.0)
        assert np.all(np.diff(alloc.thresholds.gains_sq) < 0)

    def test_extension_is_prefix_stable(self, reference_allocation):
        longer = extend_allocation(reference_allocation, 8)
        assert np.array_equal(longer.powers[:5], reference_allocation.powers)
        assert longer == allocate_powers(CodeSpec(8.0, 4, 5, 255.0), blocks=8)
        with pytest.raises(ValueError):
            extend_allocation(longer, 3)

    def test_shortfalls_cover_the_gap(self, reference_allocation):
        sf = layer_shortfalls(reference_allocation)
        np.testing.assert_allclose(sf[0], 2.0)
        assert np.all(sf[1:] > 0) and np.all(sf[1:] < 2.0)

    def test_per_block_snr(self):
        snr = per_block_snr(np.array([[1.0, 2.0]]), 0.5, 1.0)
        np.testing.assert_allclose(snr, [[0.5, 1.0 / 1.5]])

    def test_dict_round_trip(self, reference_allocation):
        again = PowerAllocation.from_dict(reference_allocation.to_dict())
        assert again == reference_allocation

    def test_dict_shape_mismatch(self, reference_allocation):
        d = reference_allocation.to_dict()
        d["powers"] = d["powers"][:3]
        with pytest.raises(ValueError):
            PowerAllocation.from_dict(d)


class TestEfficiency:
    def test_one_third(self):
        mid, lin = efficiency_lower_bound(1 / 3)
        want = (math.log(2) / 3) / (2 ** (1 / 3) - 1)
        assert mid == pytest.approx(want, rel=1e-14)
        assert mid == pytest.approx(0.8889, abs=1e-4)
        assert lin == pytest.approx(1 - math.log(2) / 6)

    def test_bounds_ordered_and_decreasing(self):
        r = np.linspace(0.01, 4.0, 400)
        mid, lin = efficiency_lower_bound(r)
        assert np.all(mid >= lin)
        assert np.all(np.diff(mid) < 0) and np.all(np.diff(lin) < 0)
        assert np.all(mid <= 1.0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            efficiency_lower_bound(0.0)

    def test_conservative_rate(self):
        # ln(1+u) <= u makes the conservative rate fall short of R
        for R, L in [(1.0, 1), (5.0, 3), (8.0, 4)]:
            assert conservative_rate(R, L) <= R
        assert conservative_rate(2.0, 1) == pytest.approx(math.log2(1 + 2 * math.log(2)))
        with pytest.raises(ValueError):
            conservative_rate(0.0, 2)
