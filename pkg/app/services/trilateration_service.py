"""
Closed-form three-sensor trilateration
======================================

Sensors sit at the vertices of a triangle in the z = 0 plane:
k1 at the origin, k2 on the +X axis and k3 with positive Y. Every sensor
reports (D, theta1, theta2) for a target; D is the perpendicular distance to
the sensor's vertical plane. k1 and k2 face +Y, k3 faces -Y.

All functions are pure and safe to call concurrently.
"""

import logging
import math
from typing import Sequence, Tuple

import numpy as np

from app.core.exceptions import BehindSensor, DegenerateTriangle, NoIntersection
from app.schemas.geometry import Point3, RawMeasurement, RigGeometry, ZSide

logger = logging.getLogger(__name__)

# Slack on z^2 below which a negative value is treated as measurement noise (mm^2)
DEFAULT_Z_SLACK_MM2 = 50.0 ** 2


def layout_vertices(l12: float, l13: float, l23: float) -> RigGeometry:
    """
    Place the three sensors from their pairwise baselines.

    y3 is the triangle height over the k1-k2 side (Heron's area with the
    semi-perimeter); x3 takes its sign from the law of cosines so obtuse
    angles at k1 are placed correctly.
    """
    if min(l12, l13, l23) <= 0:
        raise DegenerateTriangle(f"Baselines must be positive, got ({l12}, {l13}, {l23})")
    if not (l12 + l13 > l23 and l12 + l23 > l13 and l13 + l23 > l12):
        raise DegenerateTriangle(
            f"Baselines ({l12}, {l13}, {l23}) violate the strict triangle inequality"
        )

    semi_perimeter = (l12 + l13 + l23) / 2.0
    area = math.sqrt(
        semi_perimeter
        * (semi_perimeter - l12)
        * (semi_perimeter - l13)
        * (semi_perimeter - l23)
    )
    y3 = 2.0 * area / l12
    x3 = (l12 ** 2 + l13 ** 2 - l23 ** 2) / (2.0 * l12)

    return RigGeometry(
        l12=l12,
        l13=l13,
        l23=l23,
        k1=Point3(x=0.0, y=0.0, z=0.0),
        k2=Point3(x=l12, y=0.0, z=0.0),
        k3=Point3(x=x3, y=y3, z=0.0),
    )


def radius_from_measurement(m: RawMeasurement) -> float:
    """Sensor-to-target distance from depth and the two angles"""
    return math.hypot(m.depth / math.cos(m.theta1), m.depth * math.tan(m.theta2))


def trilaterate(
    rig: RigGeometry,
    r1: float,
    r2: float,
    r3: float,
    side: ZSide,
    *,
    z_slack_mm2: float = DEFAULT_Z_SLACK_MM2,
) -> Point3:
    """Intersect the three spheres centred on the sensors; `side` resolves the z sign."""
    if min(r1, r2, r3) <= 0:
        raise NoIntersection(f"Radii must be positive, got ({r1}, {r2}, {r3})")

    x2 = rig.k2.x
    x3, y3 = rig.k3.x, rig.k3.y
    r1_sq = r1 * r1

    x = (r1_sq - r2 * r2 + x2 * x2) / (2.0 * x2)
    y = (r1_sq - r3 * r3 + x3 * x3 + y3 * y3 - 2.0 * x3 * x) / (2.0 * y3)
    z_sq = r1_sq - x * x - y * y

    if z_sq < -z_slack_mm2:
        raise NoIntersection(
            f"Spheres do not intersect: z^2 = {z_sq:.3f} mm^2 below slack -{z_slack_mm2:.1f}"
        )
    z = math.sqrt(z_sq) if z_sq > 0 else 0.0
    return Point3(x=x, y=y, z=side.sign * z)


def trilaterate_measurements(
    rig: RigGeometry,
    measurements: Sequence[RawMeasurement],
    side: ZSide,
    *,
    z_slack_mm2: float = DEFAULT_Z_SLACK_MM2,
) -> Point3:
    """Trilaterate from the three sensors' raw measurements (ordered k1, k2, k3)"""
    if len(measurements) != 3:
        raise ValueError("exactly three measurements are required")
    r1, r2, r3 = (radius_from_measurement(m) for m in measurements)
    return trilaterate(rig, r1, r2, r3, side, z_slack_mm2=z_slack_mm2)


def local_from_measurement(m: RawMeasurement) -> Point3:
    """Target position in the sensor's own frame (lateral, depth, vertical)"""
    return Point3(x=m.depth * math.tan(m.theta1), y=m.depth, z=m.depth * math.tan(m.theta2))


def measurement_from_local(local: Point3) -> RawMeasurement:
    if local.y <= 0:
        raise BehindSensor(f"Target depth must be positive, got y = {local.y}")
    depth = local.y
    return RawMeasurement(
        depth=depth,
        theta1=math.atan(local.x / depth),
        theta2=math.atan(local.z / depth),
    )


def local_to_world(rig: RigGeometry, sensor_index: int, local: Point3) -> Point3:
    if sensor_index == 1:
        return Point3(x=local.x, y=local.y, z=local.z)
    if sensor_index == 2:
        return Point3(x=rig.k2.x - local.x, y=local.y, z=local.z)
    if sensor_index == 3:
        return Point3(x=rig.k3.x - local.x, y=rig.k3.y - local.y, z=local.z)
    raise ValueError(f"sensor index must be 1, 2 or 3, got {sensor_index}")


def world_to_local(rig: RigGeometry, sensor_index: int, world: Point3) -> Point3:
    if sensor_index == 1:
        return Point3(x=world.x, y=world.y, z=world.z)
    if sensor_index == 2:
        return Point3(x=rig.k2.x - world.x, y=world.y, z=world.z)
    if sensor_index == 3:
        return Point3(x=rig.k3.x - world.x, y=rig.k3.y - world.y, z=world.z)
    raise ValueError(f"sensor index must be 1, 2 or 3, got {sensor_index}")


def single_sensor_locate(rig: RigGeometry, sensor_index: int, m: RawMeasurement) -> Point3:
    """Relocate the target from one sensor's measurement alone, no fusion"""
    return local_to_world(rig, sensor_index, local_from_measurement(m))


def sphere_residuals(rig: RigGeometry, point: Point3, radii: Tuple[float, float, float]) -> Tuple[float, ...]:
    return tuple(
        point.distance_to(vertex) - radius for vertex, radius in zip(rig.vertices, radii)
    )


# --- batch forms over numpy arrays, for analysis over many samples ---

def radii_array(depth: np.ndarray, theta1: np.ndarray, theta2: np.ndarray) -> np.ndarray:
    return np.hypot(depth / np.cos(theta1), depth * np.tan(theta2))


def trilaterate_array(
    rig: RigGeometry,
    radii: np.ndarray,
    side: ZSide,
    *,
    z_slack_mm2: float = DEFAULT_Z_SLACK_MM2,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trilaterate many radius triples at once.

    `radii` has shape (n, 3). Returns (points, solved): points is (n, 3) with
    NaN rows where the spheres do not meet, solved the matching boolean mask.
    """
    radii = np.asarray(radii, dtype=np.float64)
    r1, r2, r3 = radii[:, 0], radii[:, 1], radii[:, 2]
    x2 = rig.k2.x
    x3, y3 = rig.k3.x, rig.k3.y

    x = (r1 ** 2 - r2 ** 2 + x2 ** 2) / (2.0 * x2)
    y = (r1 ** 2 - r3 ** 2 + x3 ** 2 + y3 ** 2 - 2.0 * x3 * x) / (2.0 * y3)
    z_sq = r1 ** 2 - x ** 2 - y ** 2

    solved = (z_sq >= -z_slack_mm2) & (radii > 0).all(axis=1)
    z = side.sign * np.sqrt(np.clip(z_sq, 0.0, None))
    points = np.column_stack([x, y, z])
    points[~solved] = np.nan
    return points, solved


def single_sensor_locate_array(
    rig: RigGeometry,
    sensor_index: int,
    depth: np.ndarray,
    theta1: np.ndarray,
    theta2: np.ndarray,
) -> np.ndarray:
    """World positions (n, 3) relocated from one sensor's measurements"""
    lateral = depth * np.tan(theta1)
    vertical = depth * np.tan(theta2)
    if sensor_index == 1:
        return np.column_stack([lateral, depth, vertical])
    if sensor_index == 2:
        return np.column_stack([rig.k2.x - lateral, depth, vertical])
    if sensor_index == 3:
        return np.column_stack([rig.k3.x - lateral, rig.k3.y - depth, vertical])
    raise ValueError(f"sensor index must be 1, 2 or 3, got {sensor_index}")
