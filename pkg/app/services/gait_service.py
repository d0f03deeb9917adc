"""
Synthetic gait and simulated depth sensors.

The walker follows the profile's segment plan along Y at step_length x cadence.
Each step is a swing of one leg (left on even steps); the swinging leg's joints
lift by a half-sine scaled per joint. After the plan ends it repeats mirrored,
so every pair of repetitions returns to the start line.
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np

from app.core.exceptions import BehindSensor, OutOfView, SourceExhausted
from app.schemas.frame import JOINT_ORDER, Joint
from app.schemas.geometry import Point3, RawMeasurement, RigGeometry
from app.schemas.simulation import GaitProfile, NoiseModel
from app.services.trilateration_service import measurement_from_local, world_to_local

logger = logging.getLogger(__name__)

# Fraction of the ankle's swing lift seen at each joint level
SWING_SCALE = {"hip": 0.1, "knee": 0.5, "ankle": 1.0}


def _joint_level(joint: Joint) -> str:
    return joint.value.split("_", 1)[1]


def _joint_height(profile: GaitProfile, joint: Joint) -> float:
    return {
        "hip": profile.hip_height,
        "knee": profile.knee_height,
        "ankle": profile.ankle_height,
    }[_joint_level(joint)]


def _step_signs(profile: GaitProfile) -> List[int]:
    signs: List[int] = []
    for segment in profile.plan:
        signs.extend([segment.direction.sign] * segment.steps)
    return signs


def walked_steps(profile: GaitProfile, t: float) -> float:
    """Signed number of step lengths walked from the start line at time t"""
    signs = _step_signs(profile)
    plan_steps = len(signs)
    net = sum(signs)

    progress = t * profile.cadence
    step = int(math.floor(progress))
    phase = progress - step
    repetition, within = divmod(step, plan_steps)
    mirror = -1 if repetition % 2 else 1

    displacement = float(net if repetition % 2 else 0)
    displacement += mirror * sum(signs[:within])
    displacement += mirror * signs[within] * phase
    return displacement


def gait_position(profile: GaitProfile, joint: Joint, t: float) -> Point3:
    if t < 0:
        raise ValueError("time must be non-negative")
    progress = t * profile.cadence
    step = int(math.floor(progress))
    phase = progress - step

    y = profile.origin_y + profile.step_length * walked_steps(profile, t)
    x = profile.origin_x + profile.lateral_offsets[joint]

    swinging_left = step % 2 == 0
    z = _joint_height(profile, joint)
    if joint.is_left == swinging_left:
        z += profile.swing_amplitude * SWING_SCALE[_joint_level(joint)] * math.sin(math.pi * phase)
    return Point3(x=x, y=y, z=z)


def body_positions(profile: GaitProfile, t: float) -> Dict[Joint, Point3]:
    return {joint: gait_position(profile, joint, t) for joint in JOINT_ORDER}


def observe(
    rig: RigGeometry,
    sensor: int,
    world: Point3,
    noise: NoiseModel,
    rng: Optional[np.random.Generator] = None,
) -> RawMeasurement:
    """Render one sensor's (D, theta1, theta2) view of a world point, with Gaussian noise"""
    local = world_to_local(rig, sensor, world)
    try:
        exact = measurement_from_local(local)
    except BehindSensor:
        raise OutOfView(f"Target {world.as_tuple()} is behind sensor k{sensor}")
    if noise.noiseless:
        return exact
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    depth = exact.depth + rng.normal(0.0, noise.sigma_depth)
    theta1 = exact.theta1 + rng.normal(0.0, noise.sigma_angle)
    theta2 = exact.theta2 + rng.normal(0.0, noise.sigma_angle)
    if depth <= 0:
        raise OutOfView(f"Noisy depth {depth:.1f} mm puts the target behind sensor k{sensor}")
    return RawMeasurement(depth=float(depth), theta1=float(theta1), theta2=float(theta2))


class GaitMeasurementSource:
    """
    Measurement source for one simulated sensor.

    Iteration n is captured at n x iteration length of session time by every
    sensor simultaneously; noise is drawn from a stream keyed by
    (seed, sensor, iteration) so the values do not depend on timing.
    """

    def __init__(
        self,
        rig: RigGeometry,
        profile: GaitProfile,
        noise: NoiseModel,
        sensor_index: int,
        iterations: int,
        iteration_us: int,
    ):
        self.rig = rig
        self.profile = profile
        self.noise = noise
        self.sensor_index = sensor_index
        self.iterations = iterations
        self.iteration_us = iteration_us

    def capture_time_s(self, iteration: int) -> float:
        return iteration * self.iteration_us / 1_000_000

    def read(self, iteration: int) -> List[RawMeasurement]:
        if iteration >= self.iterations:
            raise SourceExhausted(f"Source for k{self.sensor_index} ends after {self.iterations} iterations")
        t = self.capture_time_s(iteration)
        rng = None
        if not self.noise.noiseless:
            rng = np.random.default_rng([self.noise.seed, self.sensor_index, iteration])
        return [
            observe(self.rig, self.sensor_index, gait_position(self.profile, joint, t), self.noise, rng)
            for joint in JOINT_ORDER
        ]
