import numpy as np
import pytest

from rankgrasp.errors import DomainError
from rankgrasp.kinematics import (
    SerialChain,
    forward_kinematics,
    jacobian,
    manipulability,
    planar_two_link,
    six_axis_arm,
    solve_ik,
    solve_ik_batch,
)
from rankgrasp.se3 import Pose, retract, se3_distance

ARM = planar_two_link()


@pytest.mark.parametrize("theta, tip", [((0, 0), (2, 0, 0)), ((np.pi / 2, 0), (0, 2, 0)),
                                        ((0, np.pi / 2), (1, 1, 0))])
def test_two_link_forward_kinematics(theta, tip):
    np.testing.assert_allclose(forward_kinematics(ARM, theta).translation, tip, atol=1e-12)


def test_zero_length_links_stay_at_origin():
    chain = planar_two_link(0.0, 0.0)
    np.testing.assert_array_equal(forward_kinematics(chain, [0.3, -1.2]).translation, 0.0)


def test_dimension_mismatch():
    for fn in (forward_kinematics, jacobian, manipulability):
        with pytest.raises(DomainError):
            fn(ARM, [0.0, 0.0, 0.0])


def test_chain_validation():
    with pytest.raises(DomainError):
        SerialChain([[0, 0, 0]], [[0, 0, 1]], [[-1, 1]])
    with pytest.raises(DomainError):
        SerialChain([[0, 0, 0]] * 2, [[0, 0, 0], [0, 0, 1]], [[-1, 1]] * 2)
    with pytest.raises(DomainError):
        SerialChain([[0, 0, 0]] * 2, [[0, 0, 1]] * 2, [[1, -1]] * 2)


def test_two_link_planar_jacobian():
    J = jacobian(ARM, [0.0, np.pi / 2])
    np.testing.assert_allclose(J[:2, :], [[-1, -1], [1, 0]], atol=1e-12)
    np.testing.assert_allclose(J[5, :], [1, 1])


def _fd_jacobian(chain, theta, h=1e-6):
    g0 = forward_kinematics(chain, theta)
    cols = []
    for i in range(chain.dof):
        e = np.zeros(chain.dof)
        e[i] = h
        gp = forward_kinematics(chain, theta + e)
        gm = forward_kinematics(chain, theta - e)
        lin = (gp.translation - gm.translation) / (2 * h)
        # angular velocity from the skew part of dR R^T
        dR = (gp.rotation - gm.rotation) / (2 * h)
        W = dR @ g0.rotation.T
        cols.append(np.concatenate([lin, [W[2, 1], W[0, 2], W[1, 0]]]))
    return np.array(cols).T


@pytest.mark.parametrize("chain", [ARM, six_axis_arm(), six_axis_arm(Pose.from_rotvec([0.2, 0, 1], [1, 2, 0]))])
def test_jacobian_matches_finite_differences(chain, rng):
    for _ in range(10):
        theta = rng.uniform(chain.limits[:, 0], chain.limits[:, 1])
        J = jacobian(chain, theta)
        assert J.shape == (6, chain.dof)
        assert np.all(np.isfinite(J))
        assert np.max(np.abs(J - _fd_jacobian(chain, theta))) <= 1e-5


@pytest.mark.parametrize("theta2, expected", [(np.pi / 2, 1.0), (0.0, 0.0), (np.pi / 6, 0.5)])
def test_two_link_manipulability_examples(theta2, expected):
    assert manipulability(ARM, [0.4, theta2]) == pytest.approx(expected, abs=1e-12)


def test_two_link_manipulability_grid():
    l1, l2 = 0.7, 1.3
    chain = planar_two_link(l1, l2)
    for t2 in np.linspace(-np.pi, np.pi, 100):
        assert abs(manipulability(chain, [0.1, t2]) - abs(l1 * l2 * np.sin(t2))) <= 1e-9


def test_six_axis_manipulability_vanishes_at_wrist_singularity():
    arm = SerialChain(six_axis_arm().offsets, six_axis_arm().axes,
                      [[-4, 4]] * 6, tool=Pose([0, 0, 0.1]))
    assert manipulability(arm, [0, 0.3, 1.0, 0.2, 0.0, 0.4]) < 1e-9
    assert manipulability(arm, [0, 0.3, 1.0, 0.2, 0.8, 0.4]) > 1e-3


def test_ik_two_link_round_trip():
    target = forward_kinematics(ARM, [0.0, np.pi / 2])
    res = solve_ik(ARM, target, theta0=[0.1, 1.4])
    assert res.converged
    assert se3_distance(res.pose, target) < 1e-4


def test_ik_unreachable_target():
    res = solve_ik(ARM, Pose([10.0, 0, 0]), theta0=[0.1, 0.1])
    assert not res.converged
    assert se3_distance(res.pose, Pose([10.0, 0, 0])) > 1.0
    # the best iterate is still a real configuration
    assert forward_kinematics(ARM, res.theta).allclose(res.pose, atol=1e-9)


def test_ik_exact_seed_needs_no_iterations():
    theta = np.array([0.3, -0.8])
    res = solve_ik(ARM, forward_kinematics(ARM, theta), theta0=theta)
    assert res.converged and res.iterations == 0


def test_ik_respects_joint_limits(rng):
    arm = six_axis_arm()
    theta = rng.uniform(arm.limits[:, 0], arm.limits[:, 1], (20, 6))
    target = [forward_kinematics(arm, th) for th in theta]
    t = np.array([g.translation for g in target])
    q = np.array([g.quaternion for g in target])
    out, *_ = solve_ik_batch(arm, t, q)
    assert np.all(out >= arm.limits[:, 0] - 1e-12)
    assert np.all(out <= arm.limits[:, 1] + 1e-12)


def test_ik_success_rate_on_reachable_targets():
    arm = six_axis_arm()
    rng = np.random.default_rng(2024)
    theta = rng.uniform(arm.limits[:, 0], arm.limits[:, 1], (200, 6))
    poses = [forward_kinematics(arm, th) for th in theta]
    t = np.array([g.translation for g in poses])
    q = np.array([g.quaternion for g in poses])
    _, pt, pq, ok, _, dist = solve_ik_batch(arm, t, q)
    rate = np.mean(dist < 1e-4)
    assert rate >= 0.95, rate
    np.testing.assert_array_equal(ok, dist < 1e-4)


def test_ik_is_deterministic():
    arm = six_axis_arm()
    target = retract(forward_kinematics(arm, arm.mid_configuration()), [0.1, 0, 0.05, 0.2, 0, 0])
    a = solve_ik(arm, target)
    b = solve_ik(arm, target)
    np.testing.assert_array_equal(a.theta, b.theta)
