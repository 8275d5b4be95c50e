import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import steering_naive
from secure_dfrc import ContractError, PrecoderPair, Scenario, SystemConfig, Target, generate_channel
from secure_dfrc.scenario import (angle_grid, qpsk, radar_sequences, steering_matrix, steering_vector,
                                  synthesize_frame)


def test_default_grid_has_1801_points():
    cfg = SystemConfig()
    assert cfg.num_grid == 1801
    assert cfg.angle_grid_deg[0] == -90.0 and cfg.angle_grid_deg[-1] == 90.0
    assert np.all(np.diff(cfg.angle_grid_deg) > 0)


def test_steering_broadside_m4():
    a = steering_vector(SystemConfig(num_antennas=4), 0.0)
    assert np.allclose(a, 0.5 * np.ones(4), atol=1e-15)


def test_steering_endfire_m2():
    a = steering_vector(SystemConfig(num_antennas=2), 90.0)
    assert np.allclose(a, np.array([1, -1]) / math.sqrt(2), atol=1e-15)


def test_steering_m10_30deg_against_scalar_script():
    a = steering_vector(SystemConfig(), 30.0)
    assert np.allclose(a, steering_naive(10, 0.5, 30.0), atol=1e-14)
    assert abs(np.linalg.norm(a) - 1) < 1e-15
    assert abs(a[1] - np.exp(1j * math.pi / 2) / math.sqrt(10)) < 1e-15


@pytest.mark.parametrize("angle", [-90.01, 90.5, 180.0])
def test_steering_rejects_out_of_range(angle):
    with pytest.raises(ContractError):
        steering_vector(SystemConfig(), angle)


@given(st.floats(-90, 90), st.integers(2, 16))
def test_steering_unit_norm(angle, M):
    a = steering_vector(SystemConfig(num_antennas=M), angle)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


def test_steering_grid_neighbours_close():
    cfg = SystemConfig()
    A = steering_matrix(cfg, cfg.angle_grid_deg)
    assert np.linalg.norm(np.diff(A, axis=1), axis=0).max() < 0.2


def test_channel_deterministic():
    assert np.array_equal(generate_channel(2, 10, 7), generate_channel(2, 10, 7))
    assert not np.array_equal(generate_channel(2, 10, 7), generate_channel(2, 10, 8))


def test_channel_unit_power_moment():
    # K*M*draws entries; 10^5 draws of 4x10 would be heavy, 2500 gives 10^5 entries
    vals = np.concatenate([np.abs(generate_channel(4, 10, 1000 + s)).ravel() ** 2 for s in range(2500)])
    assert vals.size == 10 ** 5
    assert abs(vals.mean() - 1.0) < 0.02


def test_channel_rejects_k_above_m():
    with pytest.raises(ContractError):
        generate_channel(11, 10, 0)


def test_config_validation():
    with pytest.raises(ContractError):
        SystemConfig(total_power=0.0)
    with pytest.raises(ContractError):
        SystemConfig(noise_var_lu=-1.0)
    with pytest.raises(ContractError):
        SystemConfig(angle_grid_deg=[0.0, 0.0, 1.0])
    with pytest.raises(ContractError):
        SystemConfig(num_antennas=0)
    with pytest.raises(ContractError):
        SystemConfig(num_antennas=1)


def test_config_replace_regrids():
    cfg = SystemConfig().replace(grid_resolution=5.0)
    assert cfg.num_grid == 37
    assert cfg == SystemConfig(grid_resolution=5.0)


def test_scenario_invariants():
    cfg = SystemConfig(num_antennas=4)
    H = generate_channel(2, 4, 0)
    with pytest.raises(ContractError):
        Scenario(cfg, np.vstack([H[0], 2 * H[0]]))
    with pytest.raises(ContractError):
        Scenario(cfg, generate_channel(2, 5, 0))
    sc = Scenario(cfg, H, [Target(10.0)])
    assert sc.num_users == 2 and sc.num_targets == 1
    assert np.allclose(sc.user_channel(1), H[1].conj())


@pytest.mark.parametrize("kw", [{"angle_deg": 90.0}, {"angle_deg": -90.0},
                                {"angle_deg": 0.0, "path_loss": 0.0},
                                {"angle_deg": 0.0, "angle_uncertainty_deg": -1.0}])
def test_target_invariants(kw):
    with pytest.raises(ContractError):
        Target(**kw)


def test_qpsk_unit_modulus():
    c = qpsk(np.random.default_rng(0), (3, 1000))
    assert np.allclose(np.abs(c), 1.0)
    assert len(np.unique(np.round(np.angle(c), 9))) == 4


def test_exact_orthogonal_n_equals_m():
    S = radar_sequences(8, 8, np.random.default_rng(3), "exact-orthogonal")
    assert np.allclose(S @ S.conj().T / 8, np.eye(8), atol=1e-13)
    assert np.allclose(np.abs(S), 1.0)


def test_radar_sequences_modes():
    with pytest.raises(ContractError):
        radar_sequences(8, 4, np.random.default_rng(0), "exact-orthogonal")
    with pytest.raises(ContractError):
        radar_sequences(4, 4, np.random.default_rng(0), "chirp")


def test_frame_radar_branch_nulled():
    M, K, N = 6, 3, 50
    Wc = np.eye(M, K)
    frame = synthesize_frame(PrecoderPair(Wc, np.zeros((M, M))), N, seed=4)
    padded = np.zeros((M, N), dtype=complex)
    padded[:K] = frame.comm_symbols
    assert np.array_equal(frame.transmit_signal, padded)
    assert np.allclose(np.abs(frame.comm_symbols), 1.0)


def test_frame_columns_follow_signal_model():
    rng = np.random.default_rng(0)
    Wc = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    Wr = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    f = synthesize_frame(PrecoderPair(Wc, Wr), 16, seed=1, radar_mode="exact-orthogonal")
    for n in range(16):
        assert np.allclose(f.transmit_signal[:, n], Wr @ f.radar_symbols[:, n] + Wc @ f.comm_symbols[:, n])


def test_frame_covariance_law_of_large_numbers():
    rng = np.random.default_rng(1)
    Wc = 0.2 * (rng.standard_normal((10, 2)) + 1j * rng.standard_normal((10, 2)))
    Wr = 0.1 * (rng.standard_normal((10, 10)) + 1j * rng.standard_normal((10, 10)))
    pre = PrecoderPair(Wc, Wr)
    N = 2 ** 16
    f = synthesize_frame(pre, N, seed=2, radar_mode="exact-orthogonal")
    err = np.linalg.norm(f.transmit_signal @ f.transmit_signal.conj().T / N - pre.covariance)
    assert err <= 5 / math.sqrt(N)


def test_frame_deterministic():
    pre = PrecoderPair(np.eye(4, 2), np.eye(4))
    a = synthesize_frame(pre, 32, seed=9)
    b = synthesize_frame(pre, 32, seed=9)
    assert np.array_equal(a.transmit_signal, b.transmit_signal)


def test_angle_grid_helper():
    g = angle_grid(5.0)
    assert g.size == 37 and g[0] == -90 and g[-1] == 90
