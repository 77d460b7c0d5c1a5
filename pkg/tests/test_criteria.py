import numpy as np
import pytest
from scipy.special import expit

from conftest import random_rotation
from rankgrasp.cloud import PointCloud
from rankgrasp.criteria import (
    AffordanceRegion,
    ClassifierParams,
    CollisionCriterion,
    ConstantCriterion,
    ExecutionCriterion,
    IntentionCriterion,
    StabilityCriterion,
    gradient_of,
    mean_box_distance,
    numerical_gradient,
    resolve_criteria,
)
from rankgrasp.errors import ConfigurationError, DomainError
from rankgrasp.geometry import Box, GripperModel
from rankgrasp.kinematics import forward_kinematics, planar_two_link
from rankgrasp.scene import Scene
from rankgrasp.se3 import Pose, retract
from rankgrasp.synthetic import box_surface, make_synthetic_scene

EXEC = ExecutionCriterion()
COLL = CollisionCriterion()
STAB = StabilityCriterion()
INTENT = IntentionCriterion()


def _scene(**kw):
    kw.setdefault("target_cloud", PointCloud(np.zeros((1, 3))))
    return Scene(**kw)


# --- parameters -----------------------------------------------------------

def test_params_validation_and_replace():
    with pytest.raises(DomainError):
        ClassifierParams(collision_scale=0.0)
    with pytest.raises(DomainError):
        ClassifierParams(distance_threshold=-1.0)
    p = ClassifierParams().replace(distance_threshold=0.1)
    assert p.distance_threshold == 0.1
    assert p.to_dict()["reach_scale"] == 5.0
    with pytest.raises(ConfigurationError):
        ClassifierParams().replace(no_such_field=1)


def test_affordance_region_needs_intents():
    with pytest.raises(DomainError):
        AffordanceRegion(Box.centered([0, 0, 0], [1, 1, 1]), ())


def test_registry():
    assert set(resolve_criteria(["stability", "intention"])) == {"stability", "intention"}
    with pytest.raises(ConfigurationError):
        resolve_criteria(["magic"])
    extra = {"magic": ConstantCriterion(0.3, "magic")}
    assert resolve_criteria(["magic"], extra)["magic"].evaluate(Pose(), None) == 0.3


def test_constant_evaluator_has_zero_gradient():
    c = ConstantCriterion(0.7)
    assert c.evaluate(Pose([1, 2, 3]), None) == 0.7
    np.testing.assert_array_equal(gradient_of(c, Pose(), None), np.zeros(6))


# --- execution ------------------------------------------------------------

def test_execution_unreachable_uses_pose_distance():
    scene = _scene(chain=planar_two_link())
    p = EXEC.evaluate(Pose([4.0, 0, 0]), scene)
    assert p == pytest.approx(expit(-10.0), rel=1e-6)
    assert p == pytest.approx(4.54e-5, rel=1e-2)


def test_execution_at_threshold_is_one_half():
    chain = planar_two_link()
    theta = np.array([0.0, np.pi / 2])
    scene = _scene(chain=chain, ik_seed=theta, params=ClassifierParams(manip_threshold=1.0))
    target = forward_kinematics(chain, theta)
    assert EXEC.evaluate(target, scene) == pytest.approx(0.5, abs=1e-9)
    high = scene.with_params(manip_threshold=0.0, manip_scale=1e3)
    assert EXEC.evaluate(target, high) > 1 - 1e-12


def test_execution_needs_a_chain():
    with pytest.raises(ConfigurationError):
        EXEC.evaluate(Pose(), _scene(chain=None))


def test_execution_diagnostics_report_branch_gap():
    chain = planar_two_link()
    theta = np.array([0.3, 1.0])
    scene = _scene(chain=chain, ik_seed=theta)
    g = forward_kinematics(chain, theta)
    diag = EXEC.diagnostics(g.translation, g.quaternion, scene)
    assert diag["reached"][0]
    P = scene.params
    omega = abs(np.sin(1.0))
    assert diag["manipulability"][0] == pytest.approx(omega)
    expected_gap = expit(P.manip_scale * (omega - P.manip_threshold)) - expit(-P.reach_scale * P.pose_tolerance)
    assert diag["branch_gap"][0] == pytest.approx(expected_gap)
    # the reported gap is the jump seen crossing the tolerance boundary
    inside = EXEC.evaluate(g, scene)
    outside = expit(-P.reach_scale * P.pose_tolerance)
    assert inside - outside == pytest.approx(diag["branch_gap"][0])


def test_execution_gradient_points_toward_ik_solution():
    scene = _scene(chain=planar_two_link())
    g = Pose([3.0, 0, 0])
    grad = EXEC.gradient(g, scene)
    # moving back toward reach raises the probability
    assert grad[0] < 0
    np.testing.assert_allclose(grad[3:], 0.0, atol=1e-12)


# --- collision ------------------------------------------------------------

def _single_obstacle_scene(**params):
    obstacle = PointCloud(*box_surface([0.0, 0.0, 0.0], [0.03, 0.03, 0.03], 0.01))
    return _scene(obstacle_cloud=obstacle, params=ClassifierParams(**params))


def test_collision_at_threshold_is_one_half():
    scene = _single_obstacle_scene()
    g = Pose([0.3, 0.1, -0.2])
    dbar, _ = mean_box_distance(g.translation, g.quaternion, scene)
    tuned = scene.with_params(distance_threshold=float(dbar[0]))
    assert COLL.evaluate(g, tuned) == pytest.approx(0.5, abs=1e-12)


def test_collision_far_from_obstacles():
    assert COLL.evaluate(Pose([5.0, 0, 0]), _single_obstacle_scene()) > 1 - 1e-12


def test_collision_all_points_inside_boxes():
    box = Box.centered([0, 0, 0], [0.1, 0.1, 0.1])
    gripper = GripperModel(boxes=(box, box, box))
    pts = np.random.default_rng(0).uniform(-0.05, 0.05, (50, 3))
    scene = _scene(obstacle_cloud=PointCloud(pts), gripper=gripper,
                   params=ClassifierParams(distance_threshold=0.05))
    p = COLL.evaluate(Pose(), scene)
    assert p == pytest.approx(expit(-5.0), rel=1e-12)
    assert p == pytest.approx(6.69e-3, rel=1e-3)


def test_collision_without_obstacles_is_certain():
    assert COLL.evaluate(Pose(), _scene()) == 1.0
    np.testing.assert_array_equal(COLL.gradient(Pose(), _scene()), 0.0)


def test_collision_sign_and_target_switches():
    scene = _single_obstacle_scene()
    g = Pose([0.2, 0.0, 0.0])
    p = COLL.evaluate(g, scene)
    literal = COLL.evaluate(g, scene.with_params(paper_literal_collision_sign=True))
    assert p + literal == pytest.approx(1.0)
    target = PointCloud(*box_surface([0.5, 0, 0], [0.01, 0.01, 0.01], 0.005))
    with_target = Scene(target_cloud=target, obstacle_cloud=scene.obstacle_cloud)
    near = Pose([0.5, 0, -0.045])
    assert COLL.evaluate(near, with_target.with_params(collision_includes_target=True)) \
        < COLL.evaluate(near, with_target)


def _approach_probabilities(scene, R, start, end, n=200):
    line = start + np.linspace(0, 1, n)[:, None] * (end - start)
    q = np.tile(Pose.from_rotation(R).quaternion, (n, 1))
    p, _ = COLL.evaluate_batch(line, q, scene, with_grad=False)
    return p


def test_collision_monotone_toward_obstacle_concentric_gripper():
    # concentric boxes and a centred cube make dbar even about the centroid,
    # and it is convex, so it can only fall along a ray toward the centroid
    boxes = tuple(Box.centered([0, 0, 0], h) for h in ([0.02, 0.04, 0.02], [0.01, 0.005, 0.025], [0.03, 0.01, 0.01]))
    scene = _single_obstacle_scene(distance_threshold=0.2, collision_scale=10.0)
    scene = Scene(target_cloud=scene.target_cloud, obstacle_cloud=scene.obstacle_cloud,
                  gripper=GripperModel(boxes=boxes), params=scene.params)
    centroid = scene.obstacle_cloud.points.mean(axis=0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        R = random_rotation(rng)
        p = _approach_probabilities(scene, R, centroid + rng.normal(size=3) * 0.5, centroid)
        assert np.all(np.diff(p) <= 1e-12)


def test_collision_monotone_while_approaching_with_default_gripper():
    # stops 3 cm short: the minimiser of dbar sits near, not at, the box-centre mean
    scene = _single_obstacle_scene(distance_threshold=0.2, collision_scale=10.0)
    centre = np.mean([b.pose.translation for b in scene.gripper.boxes], axis=0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        R = random_rotation(rng)
        start = rng.normal(size=3) * 0.5
        end = -R @ centre
        stop = end + 0.03 * (start - end) / np.linalg.norm(start - end)
        p = _approach_probabilities(scene, R, start, stop)
        assert np.all(np.diff(p) <= 1e-12)


def test_collision_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 20:
        pts = rng.normal(scale=0.05, size=(60, 3))
        scene = _scene(obstacle_cloud=PointCloud(pts),
                       params=ClassifierParams(distance_threshold=0.05, collision_scale=20.0))
        g = Pose.from_rotation(random_rotation(rng), rng.normal(scale=0.03, size=3))
        num = numerical_gradient(COLL, g, scene)
        if np.linalg.norm(num) < 1e-6:
            continue
        ana = COLL.gradient(g, scene)
        assert np.linalg.norm(ana - num) <= 1e-4 * np.linalg.norm(num)
        checked += 1


# --- stability ------------------------------------------------------------

def _plate(normal_axis):
    """Nine points on a small square in the closing region, normals along ``normal_axis``."""
    u, v = np.meshgrid([-0.004, 0, 0.004], [0.035, 0.045, 0.055])
    pts = np.zeros((9, 3))
    pts[:, 0] = u.ravel()
    pts[:, 2] = v.ravel()
    nrm = np.zeros((9, 3))
    nrm[:, normal_axis] = 1.0
    return PointCloud(pts, nrm)


def test_stability_perpendicular_plate():
    scene = _scene(target_cloud=_plate(1))
    A, _ = STAB.score(np.zeros((1, 3)), np.array([[1.0, 0, 0, 0]]), scene)
    assert A[0] == pytest.approx(9.0)
    assert STAB.evaluate(Pose(), scene) > 0.9


def test_stability_edge_on_plate():
    scene = _scene(target_cloud=_plate(0))
    assert STAB.evaluate(Pose(), scene) == pytest.approx(expit(-5.0), abs=1e-12)


def test_stability_free_space():
    scene = _scene(target_cloud=_plate(1))
    g = Pose([0.0, 0.0, 1.0])
    A, _ = STAB.score(g.translation[None], g.quaternion[None], scene)
    assert A[0] < 9e-6
    assert STAB.evaluate(g, scene) == pytest.approx(expit(-5.0), abs=1e-5)


def test_stability_needs_normals():
    with pytest.raises(ConfigurationError):
        STAB.evaluate(Pose(), _scene(target_cloud=PointCloud(np.zeros((3, 3)))))


def test_stability_rigid_invariance():
    scene = make_synthetic_scene("slot", 0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        T = Pose.from_rotation(random_rotation(rng), rng.normal(size=3))
        g = Pose.from_rotation(random_rotation(rng), [0.5, 0.0, 0.2] + rng.normal(scale=0.03, size=3))
        moved = Scene(target_cloud=scene.target_cloud.transformed(T))
        a, _ = STAB.score(g.translation[None], g.quaternion[None], scene)
        Tg = T @ g
        b, _ = STAB.score(Tg.translation[None], Tg.quaternion[None], moved)
        assert abs(a[0] - b[0]) <= 1e-9 * max(1.0, abs(a[0]))


def test_stability_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.03, 0.03, (80, 3)) + [0, 0, 0.045]
    nrm = rng.normal(size=(80, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    scene = _scene(target_cloud=PointCloud(pts, nrm),
                   params=ClassifierParams(stability_threshold=10.0, stability_scale=0.2))
    checked = 0
    for _ in range(40):
        g = Pose.from_rotvec(rng.normal(scale=0.2, size=3), rng.normal(scale=0.005, size=3))
        num = numerical_gradient(STAB, g, scene)
        ana = STAB.gradient(g, scene)
        assert np.linalg.norm(ana - num) <= 1e-4 * np.linalg.norm(num) + 1e-9
        checked += 1
    assert checked == 40


# --- intention ------------------------------------------------------------

def _intent_scene(region_center=(0.0, 0.0, 0.045), cloud_point=(0.0, 0.0, 0.045), intent="use"):
    region = AffordanceRegion(Box.centered(region_center, [0.01, 0.01, 0.01]), ("use",))
    return _scene(target_cloud=PointCloud(np.array([cloud_point], dtype=float)),
                  affordance_regions=(region,), intent=intent)


def test_intention_inside_region_on_surface():
    scene = _intent_scene()
    P = scene.params
    p = INTENT.evaluate(Pose(), scene)
    assert p == pytest.approx(expit(P.intention_scale * P.affordance_radius) * expit(6.0))
    assert p > 0.99


def test_intention_gate_far_from_cloud():
    scene = _intent_scene(cloud_point=(0.10, 0.0, 0.045))
    base = expit(scene.params.intention_scale * scene.params.affordance_radius)
    p = INTENT.evaluate(Pose(), scene)
    assert p / base == pytest.approx(expit(200 * (0.03 - 0.10)), rel=1e-9)
    assert p / base == pytest.approx(8.3e-7, rel=1e-2)


def test_intention_gate_half_at_radius():
    scene = _intent_scene(cloud_point=(0.03, 0.0, 0.045))
    base = expit(scene.params.intention_scale * scene.params.affordance_radius)
    assert INTENT.evaluate(Pose(), scene) / base == pytest.approx(0.5, abs=1e-12)


def test_intention_without_matching_region():
    scene = _intent_scene(intent="handover")
    P = scene.params
    expected = expit(-P.intention_scale * P.affordance_radius) * expit(6.0)
    assert INTENT.evaluate(Pose(), scene) == pytest.approx(expected)


def test_intention_needs_an_intent():
    with pytest.raises(ConfigurationError):
        INTENT.evaluate(Pose(), _intent_scene(intent=None))


def test_intention_gradient_points_toward_region():
    scene = _intent_scene(region_center=(0.08, 0.0, 0.045), cloud_point=(0.03, 0.0, 0.045))
    scene = scene.with_params(gate_radius=0.2)
    g = Pose()
    grad = INTENT.gradient(g, scene)
    assert grad[:3] @ np.array([1.0, 0, 0]) > 0
    num = numerical_gradient(INTENT, g, scene)
    assert np.linalg.norm(grad - num) <= 1e-4 * np.linalg.norm(num)


def test_intention_gradient_matches_finite_differences():
    scene = make_synthetic_scene("stick-free", 0)
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(100):
        g = Pose.from_rotation(random_rotation(rng), rng.normal(scale=0.05, size=3) + [0.5, 0.0, 0.15])
        num = numerical_gradient(INTENT, g, scene)
        if np.linalg.norm(num) < 1e-6:
            continue
        ana = INTENT.gradient(g, scene)
        assert np.linalg.norm(ana - num) <= 1e-4 * np.linalg.norm(num)
        checked += 1
    assert checked >= 10


# --- shared contract --------------------------------------------------------

@pytest.mark.parametrize("criterion", [COLL, STAB, INTENT])
def test_probabilities_in_unit_interval(criterion):
    scene = make_synthetic_scene("stick-blocked", 1)
    rng = np.random.default_rng(9)
    n = 10_000
    t = rng.normal(scale=0.1, size=(n, 3)) + [0.5, 0.0, 0.15]
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    p, grad = criterion.evaluate_batch(t, q, scene)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.isfinite(grad))


def test_execution_probabilities_in_unit_interval():
    scene = make_synthetic_scene("open", 0)
    rng = np.random.default_rng(10)
    n = 10_000
    t = rng.normal(scale=0.5, size=(n, 3)) + [0.5, 0.0, 0.15]
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    p, grad = EXEC.evaluate_batch(t, q, scene)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.isfinite(grad))


def test_evaluation_is_deterministic():
    scene = make_synthetic_scene("slot", 0)
    g = retract(Pose([0.5, 0, 0.2]), [0, 0, 0, 0.1, 0.2, 0])
    for c in (EXEC, COLL, STAB):
        assert c.evaluate(g, scene) == c.evaluate(g, scene)
