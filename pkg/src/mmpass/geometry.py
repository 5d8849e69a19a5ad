"""Coordinate frames for steerable radiating ports.

The global Cartesian system (GCS) has x along the waveguides, y across
them and z up; waveguides hang at the ceiling height and users live on
the floor plane z = 0.

Each port carries a local Cartesian system (LCS) whose +z axis is the
port boresight, so a target on the pointing axis sits at polar angle
zero where the radiation formulas peak.  The frame is built from two
angles: a roll ``xi`` about the x-axis followed by a pitch ``delta``
about the y-axis.  Sign convention: positive pitch tilts the boresight
toward +x, positive roll toward +y, and (0, 0) points straight down
(local axes at rest: x_l = +x, y_l = -y, z_l = -z, right-handed).

Directions seen from a port are described in a local spherical system
(LSCS): polar angle theta from the boresight, azimuth phi from the
local +x axis (four-quadrant).  ``spherical_basis`` returns the unit
vectors of that system expressed back in the GCS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this sin(theta), the azimuth is degenerate and pinned to phi = 0
# so that boresight evaluations are deterministic.
_POLE_TOL = 1e-12

# Local axes of an unrotated port (boresight down, right-handed).
_REST_AXES = np.diag([1.0, -1.0, -1.0])


def rotation_x(angle: float) -> np.ndarray:
    """3x3 rotation matrix about the x-axis (right-handed)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0],
                     [0.0, c, -s],
                     [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    """3x3 rotation matrix about the y-axis (right-handed)."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s],
                     [0.0, 1.0, 0.0],
                     [-s, 0.0, c]])


@dataclass(frozen=True)
class Orientation:
    """Pitch/roll attitude of one radiating port.

    pitch: rotation about y in [-pi/2, pi/2]; +pitch steers the
        boresight toward +x.
    roll: rotation about x in [-pi/2, pi/2]; +roll steers it toward +y.
    """

    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        if not (abs(self.pitch) <= np.pi / 2 + 1e-12):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if not (abs(self.roll) <= np.pi / 2 + 1e-12):
            raise ValueError(f"roll {self.roll} outside [-pi/2, pi/2]")

    def gcs_from_lcs(self) -> np.ndarray:
        """Matrix whose columns are the LCS axes expressed in the GCS."""
        return rotation_x(self.roll) @ rotation_y(self.pitch).T @ _REST_AXES

    def lcs_from_gcs(self) -> np.ndarray:
        return _REST_AXES @ rotation_y(self.pitch) @ rotation_x(self.roll).T

    def boresight(self) -> np.ndarray:
        """Port pointing direction (+z of the LCS) in GCS coordinates."""
        return self.gcs_from_lcs()[:, 2]


IDENTITY = Orientation(0.0, 0.0)


def gcs_to_lcs(point, pa_center, orientation: Orientation) -> np.ndarray:
    """Express a GCS point in the port frame centered at ``pa_center``."""
    p = np.asarray(point, dtype=float) - np.asarray(pa_center, dtype=float)
    return orientation.lcs_from_gcs() @ p


def lcs_to_gcs(point_local, pa_center, orientation: Orientation) -> np.ndarray:
    """Inverse of :func:`gcs_to_lcs`."""
    p = np.asarray(point_local, dtype=float)
    return orientation.gcs_from_lcs() @ p + np.asarray(pa_center, dtype=float)


@dataclass(frozen=True)
class SphericalCoords:
    r: float
    theta: float
    phi: float


def lcs_to_spherical(p_local) -> SphericalCoords:
    """Radial distance, polar angle and azimuth of a local point.

    Raises ValueError for the zero vector.  At the poles (theta = 0 or
    pi) the azimuth is pinned to 0.
    """
    x, y, z = np.asarray(p_local, dtype=float)
    r = float(np.sqrt(x * x + y * y + z * z))
    if r == 0.0:
        raise ValueError("spherical coordinates undefined at the origin")
    theta = float(np.arccos(np.clip(z / r, -1.0, 1.0)))
    if np.hypot(x, y) < _POLE_TOL * r:
        phi = 0.0
    else:
        phi = float(np.arctan2(y, x))
    return SphericalCoords(r, theta, phi)


@dataclass(frozen=True)
class SphericalBasis:
    """Orthonormal (radial, polar, azimuthal) triad in GCS coordinates."""

    upsilon: np.ndarray
    vartheta: np.ndarray
    varphi: np.ndarray


def spherical_basis(theta: float, phi: float,
                    orientation: Orientation = IDENTITY,
                    pa_center=None) -> SphericalBasis:
    """LSCS unit vectors for direction (theta, phi), expressed in GCS.

    In LCS components the triad is

        upsilon  = (sin t cos p, sin t sin p, cos t)
        vartheta = (cos t cos p, cos t sin p, -sin t)
        varphi   = (-sin p, cos p, 0)

    and each row is mapped through the port frame.  ``pa_center`` is
    accepted for interface symmetry; directions do not depend on it.
    """
    if np.sin(theta) < _POLE_TOL:
        phi = 0.0
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    rot = orientation.gcs_from_lcs()
    upsilon = rot @ np.array([st * cp, st * sp, ct])
    vartheta = rot @ np.array([ct * cp, ct * sp, -st])
    varphi = rot @ np.array([-sp, cp, 0.0])
    return SphericalBasis(upsilon, vartheta, varphi)


def spherical_from_gcs(point, pa_center, orientation: Orientation):
    """Convenience: GCS point -> (SphericalCoords, SphericalBasis) in one hop."""
    local = gcs_to_lcs(point, pa_center, orientation)
    coords = lcs_to_spherical(local)
    basis = spherical_basis(coords.theta, coords.phi, orientation)
    return coords, basis
