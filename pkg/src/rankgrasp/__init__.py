"""Rank-preserving grasp selection under a hierarchy of rules."""
from .cloud import PointCloud, estimate_normals, load_cloud
from .criteria import ClassifierParams, AffordanceRegion, DEFAULT_CRITERIA
from .errors import CloudLoadError, ConfigurationError, DomainError, SceneValidationError, SizeError
from .geometry import Box, GripperModel, box_sdf
from .hierarchy import RuleHierarchy, expected_utility, log_lower_bound, rank, utility
from .kinematics import SerialChain, forward_kinematics, jacobian, manipulability, solve_ik
from .optimizer import GraspBatch, OptimizerConfig, SamplerSpec, filter_baseline, grace_opt, sample_initial
from .scene import Scene, load_scene, save_scene, load_results, save_results
from .se3 import Pose, retract, se3_distance

__version__ = "0.1.0"
