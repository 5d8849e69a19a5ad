"""System-level scenario description.

A Scenario bundles everything needed to evaluate the end-to-end
channel: medium constants, the waveguide array with its pinching
elements, the propagating modes, user locations, transmit power and
per-user noise.

Channel gains carry a per-mode reference normalization by default:
the raw aperture-field ratio of the far-field formulas is of order
1e-6 for millimeter apertures at meter ranges, which is 60 dB below
the operating point implied by the quoted transmit power and noise
floor.  Normalizing each mode's boresight gain to its obliquity factor
(1 + beta/rho) at 1 m puts the link budget in the intended regime
while preserving every relative dependence (pattern, polarization,
spreading, both attenuations).  Set ``gain_norm`` to ones to work with
the literal field-ratio gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Orientation
from .radiation import aperture_constant
from .waveguide import (MediumConstants, ModeSpec, PaPlacement, WaveguideSpec,
                        coupling_length, te_modes)

REFERENCE_DISTANCE = 1.0  # m, anchor for the per-mode gain normalization


@dataclass
class Scenario:
    med: MediumConstants
    waveguides: list[WaveguideSpec]
    modes: list[ModeSpec]
    placements: list[list[PaPlacement]]
    users: np.ndarray  # (K, 3), floor plane
    power: float  # total transmit power, W
    noise: np.ndarray  # (K,) noise power, W
    alpha_a: float = 0.0  # atmospheric absorption, Np/m
    gain_norm: np.ndarray | None = None  # per-mode scale on port-to-user gains
    region: tuple = (10.0, 6.0, 3.0)

    def __post_init__(self):
        self.users = np.atleast_2d(np.asarray(self.users, dtype=float))
        self.noise = np.broadcast_to(
            np.asarray(self.noise, dtype=float), (self.num_users,)).copy()
        if np.any(self.noise <= 0):
            raise ValueError("noise power must be positive")
        if self.gain_norm is None:
            self.gain_norm = np.ones(len(self.modes))

    @property
    def num_waveguides(self) -> int:
        return len(self.waveguides)

    @property
    def num_pas(self) -> int:
        return self.waveguides[0].num_pas

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    @property
    def num_users(self) -> int:
        return self.users.shape[0]

    def mode_amplitude(self, q: int) -> float:
        """Normalized boresight gain constant of mode q at 1 m: the
        distance-free magnitude of the port-to-user gain times the
        on-axis polarization norm."""
        mode = self.modes[q - 1]
        wg = self.waveguides[0]
        psi0 = 1.0 + mode.propagation_constant / self.med.k0
        return float(self.gain_norm[q - 1]
                     * aperture_constant(self.med, wg, mode) * psi0
                     / REFERENCE_DISTANCE)

    def with_placements(self, placements) -> "Scenario":
        return replace(self, placements=placements)

    def with_modes(self, count: int) -> "Scenario":
        return replace(self, modes=self.modes[:count],
                       gain_norm=self.gain_norm[:count])


def per_mode_gain_norm(med: MediumConstants, wg: WaveguideSpec, modes) -> np.ndarray:
    """Normalization making each mode's 1 m boresight gain equal to its
    obliquity factor (see module docstring)."""
    return np.array([REFERENCE_DISTANCE / aperture_constant(med, wg, mode)
                     for mode in modes])


def waveguide_y_positions(d_y: float, count: int) -> np.ndarray:
    """Uniform lateral spacing, centered in the region."""
    return d_y * (np.arange(count) + 0.5) / count


def default_placements(waveguides, num_pas: int, num_modes: int,
                       d_x: float) -> list[list[PaPlacement]]:
    """Evenly spread elements pointing straight down."""
    placements = []
    for m, wg in enumerate(waveguides):
        row = []
        for n in range(num_pas):
            row.append(PaPlacement(
                waveguide_index=m,
                pa_index=n + 1,
                x_position=d_x * (n + 1) / (num_pas + 1),
                orientations=tuple(Orientation() for _ in range(num_modes)),
                coupling_len=coupling_length(n + 1, num_pas, wg.kappa)))
        placements.append(row)
    return placements


def make_scenario(med: MediumConstants, *, region, num_waveguides: int,
                  num_pas: int, num_modes: int, users, power: float,
                  noise_w: float, alpha_w: float, alpha_a: float,
                  a: float = 3e-3, b: float = 2e-3,
                  kappa: float = 100.0, aperture_scale: float = 1.0,
                  normalize_gains: bool = True) -> Scenario:
    d_x, d_y, d_z = region
    ys = waveguide_y_positions(d_y, num_waveguides)
    waveguides = [
        WaveguideSpec(a=a, b=b, feed_point=np.array([0.0, y, d_z]),
                      length=d_x, alpha_w=alpha_w, kappa=kappa,
                      num_pas=num_pas, aperture_scale=aperture_scale)
        for y in ys
    ]
    modes = te_modes(waveguides[0], med, count=num_modes)
    users = np.atleast_2d(np.asarray(users, dtype=float))
    gain_norm = (per_mode_gain_norm(med, waveguides[0], modes)
                 if normalize_gains else np.ones(num_modes))
    return Scenario(
        med=med, waveguides=waveguides, modes=modes,
        placements=default_placements(waveguides, num_pas, num_modes, d_x),
        users=users, power=power,
        noise=np.full(users.shape[0], noise_w),
        alpha_a=alpha_a, gain_norm=gain_norm, region=(d_x, d_y, d_z))
