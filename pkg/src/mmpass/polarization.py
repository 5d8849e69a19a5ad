"""Jones-vector reception and polarization matching.

A user antenna is a linearly polarized element described by a unit
Jones vector in the plane transverse to the arriving wave.  The
matching efficiency against an incident field is the magnitude of the
plain transpose product of the two unit vectors (amplitude level; the
captured power scales as its square through the channel composition).

Incident fields arrive expressed in the source port's spherical basis;
seen from the user the radial direction reverses, which flips the sign
of the azimuthal component.  All Jones vectors here live in
user-centered bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SphericalBasis
from .radiation import FieldSample


@dataclass(frozen=True)
class JonesVector:
    """Unit two-component polarization state in a transverse basis."""

    c_theta: complex
    c_phi: complex
    basis: SphericalBasis | None = None

    def __post_init__(self):
        norm = np.hypot(abs(self.c_theta), abs(self.c_phi))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"Jones vector norm {norm} is not 1")

    @classmethod
    def normalized(cls, c_theta, c_phi, basis=None) -> "JonesVector":
        norm = np.hypot(abs(c_theta), abs(c_phi))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero polarization state")
        return cls(complex(c_theta / norm), complex(c_phi / norm), basis)

    def to_gcs(self) -> np.ndarray:
        """3-vector of the polarization direction in global coordinates."""
        if self.basis is None:
            raise ValueError("Jones vector carries no basis")
        vec = (self.c_theta * self.basis.vartheta.astype(complex)
               + self.c_phi * self.basis.varphi.astype(complex))
        if np.allclose(vec.imag, 0.0, atol=1e-12):
            return vec.real
        return vec


@dataclass(frozen=True)
class MatchingResult:
    eta: float
    source: tuple = ()
    user: int = -1


def flipped_user_basis(basis: SphericalBasis) -> SphericalBasis:
    """Port basis re-anchored at the user: radial and azimuthal axes
    reverse, the polar axis is shared."""
    return SphericalBasis(-basis.upsilon, basis.vartheta, -basis.varphi)


def incident_jones(field: FieldSample,
                   user_basis: SphericalBasis | None = None) -> JonesVector:
    """Normalized Jones vector of an incident field at the user.

    Without an explicit basis the components are (e_theta, -e_phi)
    normalized, expressed in the port-aligned user basis (the sign flip
    comes from reversing the propagation axis).  With ``user_basis``
    the 3-D field is projected onto that basis instead.
    """
    if field.magnitude == 0.0:
        raise ValueError("incident field is zero; polarization undefined")
    if user_basis is None:
        return JonesVector.normalized(field.e_theta, -field.e_phi,
                                      flipped_user_basis(field.basis))
    vec = field.to_gcs()
    return JonesVector.normalized(vec @ user_basis.vartheta.astype(complex),
                                  vec @ user_basis.varphi.astype(complex),
                                  user_basis)


def matching_efficiency(rx: JonesVector, incident: JonesVector) -> float:
    """|n_rx^T n_inc|: amplitude fraction captured by the antenna."""
    return float(abs(rx.c_theta * incident.c_theta
                     + rx.c_phi * incident.c_phi))


def optimal_rx_polarization(q: int, theta: float, phi: float, beta: float,
                            rho_free: float,
                            basis: SphericalBasis | None = None) -> JonesVector:
    """Closed-form receive polarization that perfectly matches mode q
    arriving from direction (theta, phi).

    The components are the mode's transverse polarization normalized,
    with the azimuthal sign flipped into the user's plane:

        q = 1:  ((1 + beta/rho cos t) cos p, -(beta/rho + cos t) sin p) / V
        q = 2:  ((1 + beta/rho cos t) sin p, -(beta/rho + cos t) cos p) / V
    """
    ratio = beta / rho_free
    a_fac = 1.0 + ratio * np.cos(theta)
    b_fac = ratio + np.cos(theta)
    if q == 1:
        c_t, c_p = a_fac * np.cos(phi), -b_fac * np.sin(phi)
    elif q == 2:
        c_t, c_p = a_fac * np.sin(phi), -b_fac * np.cos(phi)
    else:
        raise ValueError(f"unsupported mode index {q}")
    return JonesVector.normalized(c_t, c_p, basis)


def codebook_angles(size: int) -> np.ndarray:
    """Uniform angular codebook 0, 2 pi/S, ..., used by the discrete
    polarization scheme (S = 18 gives a pi/9 line spacing)."""
    if size < 2:
        raise ValueError("codebook needs at least 2 entries")
    return 2 * np.pi * np.arange(size) / size


def discrete_rx_polarization(incident: JonesVector,
                             codebook_size: int = 18) -> JonesVector:
    """Best codeword (cos a, sin a) from a uniform angular codebook.

    Ties resolve to the lowest codeword index for reproducibility.
    """
    angles = codebook_angles(codebook_size)
    etas = np.abs(np.cos(angles) * incident.c_theta
                  + np.sin(angles) * incident.c_phi)
    best = int(np.argmax(etas))
    return JonesVector(float(np.cos(angles[best])),
                       float(np.sin(angles[best])), incident.basis)


def user_arrival_basis(user_pos, source_pos) -> SphericalBasis:
    """Transverse basis at the user for the direction looking back at
    the source.

    The radial axis points at the source; vartheta is the in-plane
    direction closest to vertical (it degenerates to +x for overhead
    arrivals), which is the deterministic reference used by the
    fixed-polarization baseline and the discrete codebook.
    """
    offset = (np.asarray(source_pos, dtype=float)
              - np.asarray(user_pos, dtype=float))
    r = np.linalg.norm(offset)
    if r == 0.0:
        raise ValueError("source coincides with the user")
    u = offset / r
    vertical = np.array([0.0, 0.0, 1.0])
    vartheta = vertical - (vertical @ u) * u
    norm = np.linalg.norm(vartheta)
    if norm < 1e-9:
        vartheta = np.array([1.0, 0.0, 0.0])
    else:
        vartheta = vartheta / norm
    varphi = np.cross(u, vartheta)
    return SphericalBasis(upsilon=u, vartheta=vartheta, varphi=varphi)
