"""TE-mode propagation, coupling and the guide-to-port channel.

Rectangular dielectric waveguides of cross section a x b (a > b, a
along y, b along z) run parallel to the x-axis.  Each guide carries up
to two propagating modes, indexed q = 1 (TE10) and q = 2 (TE01), and
hosts N pinching elements that each extract an equal 1/N share of the
guided power through a coupling length tau_n = arcsin(sqrt(1/(N+1-n)))/kappa.

The guide-to-port gain for mode q at position x is

    h = sqrt(exp(-alpha_w x) / N) * exp(-1j beta_q x)

which stacks into a block-diagonal QMN x QM matrix (one NQ x Q block
per waveguide, zero across guides and across modes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import epsilon_0, mu_0, speed_of_light

from .geometry import Orientation


@dataclass(frozen=True)
class MediumConstants:
    """Carrier and material constants shared by every waveguide."""

    frequency: float
    n_core: float = 2.0
    permeability: float = mu_0
    permittivity: float = epsilon_0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.n_core < 1:
            raise ValueError("core refractive index must be >= 1")

    @property
    def wavelength0(self) -> float:
        """Free-space wavelength c / f."""
        return speed_of_light / self.frequency

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.frequency

    @property
    def k0(self) -> float:
        """Free-space wavenumber 2 pi / lambda0."""
        return 2 * np.pi / self.wavelength0

    @property
    def guided_wavenumber(self) -> float:
        """Wavenumber inside the dielectric core, n_core * k0."""
        return self.n_core * self.k0


@dataclass(frozen=True)
class WaveguideSpec:
    """One physical waveguide: cross section, feed point, loss, coupling.

    ``alpha_w`` is the internal power attenuation in Np/m (dB inputs are
    converted at config ingestion).  ``aperture_scale`` sets the size of
    the radiating aperture of each port relative to the guide cross
    section; it does not alter the modal constants.
    """

    a: float
    b: float
    feed_point: np.ndarray
    length: float
    alpha_w: float = 0.0
    kappa: float = 100.0
    num_pas: int = 1
    aperture_scale: float = 1.0

    def __post_init__(self):
        if not (self.a > self.b > 0):
            raise ValueError("cross section requires a > b > 0")
        if self.alpha_w < 0:
            raise ValueError("alpha_w must be >= 0")
        if self.num_pas < 1:
            raise ValueError("num_pas must be >= 1")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        object.__setattr__(self, "feed_point",
                           np.asarray(self.feed_point, dtype=float))

    @property
    def axis_y(self) -> float:
        return float(self.feed_point[1])

    @property
    def axis_z(self) -> float:
        return float(self.feed_point[2])

    @property
    def aperture_a(self) -> float:
        return self.a * self.aperture_scale

    @property
    def aperture_b(self) -> float:
        return self.b * self.aperture_scale


@dataclass(frozen=True)
class ModeSpec:
    """A propagating TE_{u,v} mode and its derived constants."""

    u: int
    v: int
    index: int  # 1-based mode index q
    cutoff_wavenumber: float
    propagation_constant: float
    guided_wavenumber: float


def mode_spec(u: int, v: int, wg: WaveguideSpec, med: MediumConstants,
              index: int = 1) -> ModeSpec:
    """Build a TE_{u,v} mode, rejecting evanescent combinations.

    The cutoff is rho_q = sqrt((u pi / a)^2 + (v pi / b)^2) and the
    propagation constant beta_q = sqrt(rho^2 - rho_q^2) with rho the
    guided wavenumber n_core * k0.
    """
    if (u, v) == (0, 0):
        raise ValueError("TE00 does not exist")
    cutoff = np.sqrt((u * np.pi / wg.a) ** 2 + (v * np.pi / wg.b) ** 2)
    rho = med.guided_wavenumber
    if rho <= cutoff:
        raise ValueError(
            f"TE{u}{v} is evanescent: guided wavenumber {rho:.1f} rad/m "
            f"below cutoff {cutoff:.1f} rad/m")
    beta = np.sqrt(rho ** 2 - cutoff ** 2)
    return ModeSpec(u, v, index, float(cutoff), float(beta), float(rho))


def te_modes(wg: WaveguideSpec, med: MediumConstants, count: int = 2):
    """The fixed mode map q=1 -> TE10, q=2 -> TE01."""
    if count not in (1, 2):
        raise ValueError("only one or two modes are supported")
    modes = [mode_spec(1, 0, wg, med, index=1)]
    if count == 2:
        modes.append(mode_spec(0, 1, wg, med, index=2))
    return modes


@dataclass(frozen=True)
class PaPlacement:
    """One pinching element on a waveguide with per-port orientations."""

    waveguide_index: int
    pa_index: int  # 1-based position in the coupling cascade
    x_position: float
    orientations: tuple[Orientation, ...]
    coupling_len: float = 0.0

    @property
    def num_ports(self) -> int:
        return len(self.orientations)

    def center(self, wg: WaveguideSpec) -> np.ndarray:
        return np.array([self.x_position, wg.axis_y, wg.axis_z])


def transverse_pattern(mode: ModeSpec, wg: WaveguideSpec, y_off: float,
                       z_off: float) -> np.ndarray:
    """Bracketed (j, k) components of the modal pattern at a transverse
    offset from the guide axis (no prefactor, no attenuation/phase)."""
    u, v = mode.u, mode.v
    arg_y = u * np.pi / wg.a * (y_off + wg.a / 2)
    arg_z = v * np.pi / wg.b * (z_off + wg.b / 2)
    e_j = v / wg.b * np.cos(arg_y) * np.sin(arg_z)
    e_k = u / wg.a * np.sin(arg_y) * np.cos(arg_z)
    return np.array([e_j, e_k])


def pattern_prefactor(mode: ModeSpec, med: MediumConstants) -> complex:
    """Constant j*omega*mu*pi/rho_q^2 multiplying the transverse pattern."""
    return 1j * med.omega * med.permeability * np.pi / mode.cutoff_wavenumber ** 2


def axis_pattern_norm(mode: ModeSpec, wg: WaveguideSpec,
                      med: MediumConstants) -> float:
    """|calligraphic E| of Eq-style pattern at the guide axis, unit drive.

    This is the denominator of the port-to-user gain: the modal field
    magnitude at the pinch point with attenuation and phase stripped.
    """
    comps = transverse_pattern(mode, wg, 0.0, 0.0)
    norm = float(np.hypot(comps[0], comps[1]))
    if norm == 0.0:
        raise ValueError(f"TE{mode.u}{mode.v} pattern vanishes on the axis")
    return abs(pattern_prefactor(mode, med)) * norm


def modal_field(mode: ModeSpec, wg: WaveguideSpec, med: MediumConstants,
                point, excitation: complex = 1.0) -> np.ndarray:
    """Transverse electric field of one guided mode at a point inside
    the guide, as a complex GCS vector (the x component of a TE mode is
    identically zero).

    Amplitude decays as sqrt(exp(-alpha_w x)) and the phase advances as
    exp(-1j beta x) from the feed at x = 0.
    """
    p = np.asarray(point, dtype=float)
    x = p[0] - wg.feed_point[0]
    y_off = p[1] - wg.axis_y
    z_off = p[2] - wg.axis_z
    tol = 1e-12
    if abs(y_off) > wg.a / 2 + tol or abs(z_off) > wg.b / 2 + tol:
        raise ValueError(f"point {point} outside the waveguide cross section")
    if x < -tol or x > wg.length + tol:
        raise ValueError(f"x = {x} outside the waveguide span [0, {wg.length}]")
    e_j, e_k = transverse_pattern(mode, wg, y_off, z_off)
    scale = (pattern_prefactor(mode, med) * excitation
             * np.sqrt(np.exp(-wg.alpha_w * x))
             * np.exp(-1j * mode.propagation_constant * x))
    return scale * np.array([0.0, e_j, e_k])


def coupling_length(n: int, n_total: int, kappa: float) -> float:
    """Equal-quota coupling length of the n-th element in a cascade of
    n_total: sin^2(kappa tau) = 1/(n_total + 1 - n)."""
    if not 1 <= n <= n_total:
        raise ValueError(f"pa index {n} outside 1..{n_total}")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return float(np.arcsin(np.sqrt(1.0 / (n_total + 1 - n))) / kappa)


def cascade_amplitude(n: int, n_total: int, kappa: float) -> float:
    """Amplitude fraction delivered to element n through the coupling
    cascade, computed the long way (residual product times the local
    coupled fraction).  Equals sqrt(1/N) for the equal-quota schedule."""
    residual = 1.0
    for i in range(1, n):
        tau_i = coupling_length(i, n_total, kappa)
        residual *= np.sqrt(1.0 - np.sin(kappa * tau_i) ** 2)
    tau_n = coupling_length(n, n_total, kappa)
    return float(residual * np.sin(kappa * tau_n))


def h_wg_to_pa(mode: ModeSpec, wg: WaveguideSpec, pa: PaPlacement) -> complex:
    """Channel gain from the waveguide input to one pinch point."""
    x = pa.x_position
    if not 0 <= x <= wg.length + 1e-12:
        raise ValueError(f"pa position {x} outside the waveguide")
    amp = np.sqrt(np.exp(-wg.alpha_w * x) / wg.num_pas)
    return complex(amp * np.exp(-1j * mode.propagation_constant * x))


def wp_row(m: int, n: int, q: int, n_pas: int, n_modes: int) -> int:
    """0-based row index of port (m, n, q) in the QMN-dim port stack."""
    return (m * n_pas + n) * n_modes + q


def wp_col(m: int, q: int, n_modes: int) -> int:
    """0-based column index of mode input (m, q) in the QM-dim stack."""
    return m * n_modes + q


def assemble_H_wp(scenario) -> np.ndarray:
    """Block-diagonal QMN x QM guide-to-port matrix for a scenario.

    Entry (m, n, q) -> (m', q') is h_wg_to_pa when m == m' and q == q',
    zero otherwise: ports only couple to their own guide and mode.
    """
    n_wg = len(scenario.waveguides)
    n_modes = len(scenario.modes)
    n_pas = scenario.waveguides[0].num_pas
    h = np.zeros((n_wg * n_pas * n_modes, n_wg * n_modes), dtype=complex)
    for m, (wg, pas) in enumerate(zip(scenario.waveguides, scenario.placements)):
        for n, pa in enumerate(pas):
            for q, mode in enumerate(scenario.modes):
                h[wp_row(m, n, q, n_pas, n_modes),
                  wp_col(m, q, n_modes)] = h_wg_to_pa(mode, wg, pa)
    return h
