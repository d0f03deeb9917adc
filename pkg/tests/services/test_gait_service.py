import numpy as np
import pytest

from app.core.exceptions import OutOfView, SourceExhausted
from app.schemas.config import RigConfig
from app.schemas.frame import JOINT_ORDER, Joint
from app.schemas.geometry import Point3
from app.schemas.simulation import Direction, GaitProfile, GaitSegment, NoiseModel
from app.services.gait_service import (
    GaitMeasurementSource,
    body_positions,
    gait_position,
    observe,
    walked_steps,
)
from app.services.trilateration_service import single_sensor_locate, world_to_local


@pytest.fixture
def profile():
    return RigConfig().gait


class TestGaitPosition:
    def test_start_line(self, profile):
        for joint in JOINT_ORDER:
            p = gait_position(profile, joint, 0.0)
            assert p.x == profile.origin_x + profile.lateral_offsets[joint]
            assert p.y == profile.origin_y
        assert gait_position(profile, Joint.LEFT_HIP, 0.0).z == profile.hip_height
        assert gait_position(profile, Joint.RIGHT_KNEE, 0.0).z == profile.knee_height

    def test_ankle_stays_in_swing_envelope(self, profile):
        heights = [gait_position(profile, Joint.LEFT_ANKLE, t / 100).z for t in range(0, 4000)]
        assert min(heights) == pytest.approx(80.0)
        assert max(heights) == pytest.approx(230.0, abs=0.1)
        assert all(80.0 <= z <= 230.0 + 1e-9 for z in heights)

    def test_legs_alternate(self, profile):
        # step 0 swings the left leg, step 1 the right one
        assert gait_position(profile, Joint.LEFT_ANKLE, 0.5).z > profile.ankle_height
        assert gait_position(profile, Joint.RIGHT_ANKLE, 0.5).z == profile.ankle_height
        assert gait_position(profile, Joint.RIGHT_ANKLE, 1.5).z > profile.ankle_height
        assert gait_position(profile, Joint.LEFT_ANKLE, 1.5).z == profile.ankle_height

    def test_one_plan_walks_net_displacement(self, profile):
        assert profile.plan_steps == 19
        p = gait_position(profile, Joint.LEFT_HIP, 19.0)
        assert p.y == pytest.approx(profile.origin_y + 500.0)

    def test_mirrored_repetition_returns_to_start(self, profile):
        assert walked_steps(profile, 38.0) == pytest.approx(0.0)
        assert walked_steps(profile, 76.0) == pytest.approx(0.0)

    def test_stays_between_plan_extremes(self, profile):
        ys = [gait_position(profile, Joint.RIGHT_HIP, t / 10).y for t in range(0, 800)]
        assert min(ys) == pytest.approx(profile.origin_y - 1000.0)
        assert max(ys) == pytest.approx(profile.origin_y + 1500.0)

    def test_continuous_across_steps(self, profile):
        before = gait_position(profile, Joint.LEFT_KNEE, 2.999999)
        after = gait_position(profile, Joint.LEFT_KNEE, 3.0)
        assert before.distance_to(after) < 0.01

    def test_negative_time(self, profile):
        with pytest.raises(ValueError):
            gait_position(profile, Joint.LEFT_HIP, -0.1)

    def test_body_positions_has_every_joint(self, profile):
        assert set(body_positions(profile, 1.25)) == set(JOINT_ORDER)

    def test_heights_must_be_ordered(self):
        with pytest.raises(ValueError):
            GaitProfile(hip_height=400.0, knee_height=500.0)

    def test_custom_plan(self):
        profile = GaitProfile(plan=[GaitSegment(direction=Direction.BACKWARD, steps=2)], step_length=300.0)
        assert gait_position(profile, Joint.LEFT_HIP, 2.0).y == pytest.approx(-600.0)


class TestObserve:
    @pytest.mark.parametrize("sensor", [1, 2, 3])
    def test_noiseless_round_trip(self, rig, sensor):
        rng = np.random.default_rng(sensor)
        for _ in range(200):
            target = Point3(x=rng.uniform(500, 5500), y=rng.uniform(200, 3800), z=rng.uniform(-500, 1500))
            m = observe(rig, sensor, target, NoiseModel.ideal())
            assert single_sensor_locate(rig, sensor, m).distance_to(target) < 1e-9

    def test_depth_noise_statistics(self, rig):
        noise = NoiseModel(sigma_depth=10.0, sigma_angle=0.002)
        target = Point3(x=2000.0, y=2500.0, z=600.0)
        exact = world_to_local(rig, 1, target).y
        rng = np.random.default_rng(99)
        depths = np.array([observe(rig, 1, target, noise, rng).depth for _ in range(10_000)])
        assert np.std(depths - exact) == pytest.approx(10.0, rel=0.05)
        assert abs(np.mean(depths - exact)) < 0.5

    def test_target_on_sensor_plane(self, rig):
        with pytest.raises(OutOfView):
            observe(rig, 1, Point3(x=1000.0, y=0.0, z=100.0), NoiseModel.ideal())

    def test_target_behind_k3(self, rig):
        with pytest.raises(OutOfView):
            observe(rig, 3, Point3(x=3000.0, y=4500.0, z=100.0), NoiseModel.ideal())


class TestMeasurementSource:
    def _source(self, rig, profile, noise, iterations=5):
        return GaitMeasurementSource(rig, profile, noise, sensor_index=2, iterations=iterations, iteration_us=60_000)

    def test_reads_six_joints(self, rig, profile):
        frame = self._source(rig, profile, NoiseModel.ideal()).read(0)
        assert len(frame) == len(JOINT_ORDER)

    def test_exhausted_after_last_iteration(self, rig, profile):
        source = self._source(rig, profile, NoiseModel.ideal(), iterations=3)
        source.read(2)
        with pytest.raises(SourceExhausted):
            source.read(3)

    def test_noise_depends_only_on_iteration(self, rig, profile):
        noise = NoiseModel(sigma_depth=10.0, seed=4)
        a = self._source(rig, profile, noise)
        b = self._source(rig, profile, noise)
        assert a.read(3) == b.read(3)
        assert a.read(1) != a.read(2)

    def test_capture_time(self, rig, profile):
        assert self._source(rig, profile, NoiseModel.ideal()).capture_time_s(10) == pytest.approx(0.6)
