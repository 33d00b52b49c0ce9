import numpy as np
import pytest
from scipy import stats

from onebitpc.channel import (
    LinkScenario,
    apply_uplink,
    distance_at,
    effective_rho_db,
    link_states,
    mobility_trace,
    pathloss_db,
    rayleigh_channel,
    shadowing_trace,
)
from onebitpc.numerics import RngStream


def test_rayleigh_power_and_correlation():
    h = rayleigh_channel(4, RngStream(1, 0), batch=(100_000,))
    assert np.mean(np.sum(np.abs(h) ** 2, axis=1)) / 4 == pytest.approx(1.0, abs=0.02)
    cov = h.T @ h.conj() / h.shape[0]
    off = cov[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 0.02


def test_rayleigh_deterministic():
    np.testing.assert_array_equal(rayleigh_channel(8, RngStream(2, 5)), rayleigh_channel(8, RngStream(2, 5)))


def test_uplink_pure_noise():
    h = np.ones(16, dtype=complex)
    y = apply_uplink(h, np.ones(50_000), -np.inf, RngStream(3))
    assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, abs=0.01)


def test_uplink_noiseless_conjugate_convention():
    h = np.array([1 + 2j, -0.5j, 3.0])
    s = np.array([1j, (1 + 1j) / np.sqrt(2), -1.0, 2 - 1j])
    y = apply_uplink(h, s, 6.0, None, noise=False)
    amp = np.sqrt(10 ** 0.6)
    for t in range(s.size):
        np.testing.assert_allclose(y[:, t], amp * h * np.conj(s[t]), rtol=1e-14)


def test_uplink_signal_plus_noise_power():
    g = RngStream(4)
    h = rayleigh_channel(4, g, batch=(100_000,))
    y = apply_uplink(h, np.array([np.exp(0.3j)]), 0.0, g)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(2.0, abs=0.02)


def test_uplink_rejects_nan_power():
    with pytest.raises(ValueError):
        apply_uplink(np.ones(2), np.ones(2), float("nan"), RngStream(0))


def test_pathloss_values():
    assert pathloss_db(1.0) == -61.0
    assert pathloss_db(10.0) == pytest.approx(-91.0)
    assert pathloss_db(63.73) == pytest.approx(-61 - 30 * np.log10(63.73), abs=1e-12)
    assert pathloss_db(63.73) == pytest.approx(-115.13, abs=0.01)
    d = np.linspace(0.1, 500, 1000)
    assert np.all(np.diff(pathloss_db(d)) < 0)


@pytest.mark.parametrize("d", [0.0, -3.0])
def test_pathloss_rejects_nonpositive(d):
    with pytest.raises(ValueError):
        pathloss_db(d)


def test_mobility_default_scenario():
    sc = LinkScenario()
    tr = mobility_trace(sc)
    assert tr.shape == (250, 2)
    assert tr[0, 1] == pytest.approx(63.73)
    assert distance_at(sc, 2.5) == pytest.approx(13.73)
    np.testing.assert_allclose(np.diff(tr[:, 0]), 0.01)


def test_mobility_static_and_crossing():
    tr = mobility_trace(LinkScenario(velocity_mps=0.0, duration_s=1.0))
    assert np.all(tr[:, 1] == 63.73)
    with pytest.raises(ValueError):
        mobility_trace(LinkScenario(d0_m=10.0, velocity_mps=20.0, duration_s=1.0))


def test_shadowing_zero_sigma():
    assert np.all(shadowing_trace(LinkScenario(shadow_sigma_db=0.0), RngStream(0)) == 0)


def _long_scenario(corr_m, sigma=4.0):
    # 1e5 steps of 1 m each
    return LinkScenario(shadow_sigma_db=sigma, shadow_corr_distance_m=corr_m, d0_m=2e5,
                        velocity_mps=1.0, duration_s=1e5, step_s=1.0)


def test_shadowing_std_and_autocorrelation():
    sc = _long_scenario(10.0)
    s = shadowing_trace(sc, RngStream(5, 1))
    assert s.size == 100_000
    assert s.std() == pytest.approx(4.0, rel=0.05)
    lag = 10
    r = np.corrcoef(s[:-lag], s[lag:])[0, 1]
    assert r == pytest.approx(np.exp(-1), abs=0.05)


def test_shadowing_marginal_gaussian():
    s = shadowing_trace(_long_scenario(0.01), RngStream(6, 1))
    assert stats.normaltest(s).pvalue > 0.01


def test_shadowing_reproducible():
    sc = LinkScenario()
    np.testing.assert_array_equal(shadowing_trace(sc, RngStream(9, 2)), shadowing_trace(sc, RngStream(9, 2)))


def test_link_budget_additive():
    sc = LinkScenario(noise_floor_db=-120.0)
    d = np.array([63.73, 30.0, 13.73])
    sh = np.array([1.5, -2.0, 0.0])
    base = effective_rho_db(0.0, d, sh, sc)
    for tx in (-10.0, 3.3, 25.0):
        np.testing.assert_allclose(effective_rho_db(tx, d, sh, sc) - base, tx, atol=1e-12)
    np.testing.assert_allclose(base, pathloss_db(d) + sh + 120.0)


def test_link_states_invariant():
    sc = LinkScenario(noise_floor_db=-118.0)
    for st in link_states(sc, 2.0, RngStream(1))[:20]:
        assert st.effective_rho_db == pytest.approx(2.0 + pathloss_db(st.d) + st.shadow_db + 118.0)
