import math
from typing import Dict, Optional

import pytest

from app.schemas.config import RigConfig
from app.schemas.frame import JointFrame
from app.schemas.geometry import RawMeasurement
from app.schemas.simulation import NoiseModel
from app.services.trilateration_service import layout_vertices


def quiet_config(duration_s: float = 0.6, noise: Optional[NoiseModel] = None, **sections) -> RigConfig:
    """Virtual-time config without noise, clock error or network delay unless given"""
    data: Dict = {
        "noise": (noise or NoiseModel.ideal()).model_dump(mode="json"),
        "session": {"duration_s": duration_s, "virtual_time": True},
    }
    data.update(sections)
    return RigConfig.model_validate(data)


def make_frame(client_id: int = 1, seq: int = 1, client_ts: int = 0, depth: float = 4000.0) -> JointFrame:
    joints = [RawMeasurement(depth=depth + i, theta1=0.01 * i, theta2=-0.02 * i) for i in range(6)]
    return JointFrame(client_id=client_id, seq=seq, client_ts=client_ts, joints=joints)


@pytest.fixture
def rig():
    return layout_vertices(6000.0, 5000.0, 5000.0)


@pytest.fixture
def default_config():
    return RigConfig()


@pytest.fixture
def rounding_tolerance():
    # positions quoted to 0.1 mm move a distance by at most 0.05 mm per axis
    return 0.05 * math.sqrt(3)


def write_run(artifacts, config: RigConfig, out_dir):
    """Write a session's artifacts the way `gaitrig simulate` does"""
    from app.core.config import config_digest
    from app.schemas.session import RunManifest, RunMode
    from app.services import artifact_service

    manifest = RunManifest(
        mode=RunMode.SIMULATE,
        config_sha256=config_digest(config),
        seed=config.seed,
        output_dir=str(out_dir),
        duration_s=config.session.duration_s,
        iterations=config.iterations,
        config=config.model_dump(mode="json"),
    )
    return artifact_service.write_artifacts(artifacts, out_dir, manifest)
