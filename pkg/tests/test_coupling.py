import math

import numpy as np
import pytest

from capalink.coupling import (
    CouplingModel,
    coupled_channel,
    coupled_pair,
    coupling_matrix,
    element_channel,
    mutual_impedance,
    pair_from_vectors,
)
from capalink.geometry import DiscreteAperture, UserPlacement, Wavelength
from capalink.uplink import SicOrder, sic_rates, sum_capacity_ul

WL = Wavelength(0.125)
A_U = WL.isotropic_rx_area
USER1 = UserPlacement(10.0, math.pi / 6, math.pi / 3, A_U)
USER2 = UserPlacement(20.0, math.pi / 6, math.pi / 3, A_U)
MODEL = CouplingModel()


class TestCouplingMatrix:
    def test_single_element_scalar(self):
        a = DiscreteAperture(1, 1, 0.05, A_U)
        c = coupling_matrix(a, WL, MODEL)
        assert c.shape == (1, 1)
        # zero mutual impedance leaves (za + zt)/zt
        assert c[0, 0] == pytest.approx(2.0, abs=1e-14)

    def test_decoupled_limit_far_elements(self):
        a = DiscreteAperture(3, 3, 1e6, A_U)
        c = coupling_matrix(a, WL, MODEL)
        np.testing.assert_allclose(c, 2.0 * np.eye(9), atol=1e-9)

    def test_symmetry(self):
        a = DiscreteAperture(5, 3, WL.lam / 3, A_U)
        z = mutual_impedance(a, WL, MODEL)
        np.testing.assert_allclose(z, z.T, atol=1e-15)
        c = coupling_matrix(a, WL, MODEL)
        np.testing.assert_allclose(c, c.T, atol=1e-8)

    def test_zero_diagonal_impedance(self):
        a = DiscreteAperture(3, 3, WL.lam / 3, A_U)
        z = mutual_impedance(a, WL, MODEL)
        assert np.all(np.diag(z) == 0.0)


class TestCoupledChannel:
    def test_identity_matches_uncoupled(self):
        a = DiscreteAperture(5, 5, WL.lam / 3, A_U)
        h = element_channel(a, USER1, WL)
        hc = coupled_channel(a, USER1, np.eye(a.count), WL)
        np.testing.assert_array_equal(h, hc)
        from capalink.channel import correlation_spda, gain_spda

        pair = pair_from_vectors(
            coupled_channel(a, USER1, np.eye(a.count), WL),
            coupled_channel(a, USER2, np.eye(a.count), WL),
        )
        assert pair.g1 == pytest.approx(gain_spda(a, USER1, WL), rel=1e-12)
        assert abs(pair.rho) == pytest.approx(
            abs(correlation_spda(a, USER1, USER2, WL)), abs=1e-12
        )

    def test_scalar_scaling(self):
        a = DiscreteAperture(5, 5, WL.lam / 3, A_U)
        base = pair_from_vectors(
            element_channel(a, USER1, WL), element_channel(a, USER2, WL)
        )
        scaled = pair_from_vectors(
            coupled_channel(a, USER1, 2.0 * np.eye(a.count), WL),
            coupled_channel(a, USER2, 2.0 * np.eye(a.count), WL),
        )
        assert scaled.g1 == pytest.approx(4 * base.g1, rel=1e-12)
        assert scaled.g2 == pytest.approx(4 * base.g2, rel=1e-12)
        assert abs(scaled.rho) == pytest.approx(abs(base.rho), abs=1e-12)

    def test_dimension_mismatch(self):
        a = DiscreteAperture(3, 3, WL.lam / 3, A_U)
        with pytest.raises(ValueError):
            coupled_channel(a, USER1, np.eye(4), WL)

    def test_correlation_bounded(self):
        a = DiscreteAperture(7, 7, WL.lam / 3, A_U)
        pair = coupled_pair(a, USER1, USER2, WL, MODEL)
        assert abs(pair.rho) <= 1.0 + 1e-12


class TestCoupledCapacity:
    def test_order_invariance_survives_coupling(self):
        a = DiscreteAperture(7, 7, WL.lam / 3, A_U)
        ch = coupled_pair(a, USER1, USER2, WL, MODEL)
        csum = sum_capacity_ul(1e3, 1e4, ch)
        for order in SicOrder:
            assert sic_rates(1e3, 1e4, ch, order).total == pytest.approx(csum, abs=1e-12)

    def test_coupling_degrades_default_geometry(self):
        # reference mutual-coupling setup: 1 m^2 span, lambda/3 spacing
        m = 25
        a = DiscreteAperture(m, m, WL.lam / 3, A_U)
        plain = pair_from_vectors(
            element_channel(a, USER1, WL), element_channel(a, USER2, WL)
        )
        coupled = coupled_pair(a, USER1, USER2, WL, MODEL)
        assert coupled.g1 < plain.g1
        assert coupled.g2 < plain.g2
        assert sum_capacity_ul(1e3, 1e4, coupled) < sum_capacity_ul(1e3, 1e4, plain)
