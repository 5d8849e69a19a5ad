import numpy as np
import pytest

from mmpass.geometry import Orientation
from mmpass.waveguide import (MediumConstants, PaPlacement, WaveguideSpec,
                              cascade_amplitude, coupling_length, h_wg_to_pa,
                              modal_field, mode_spec, te_modes, assemble_H_wp)

# reference constants at 100 GHz in a 3 x 2 mm guide with core index 2,
# frozen from an exact side computation
LAMBDA0 = 0.00299792458
RHO_GUIDED = 4191.690043903364
CUTOFF_TE10 = 1047.1975511965977
CUTOFF_TE01 = 1570.7963267948966
BETA1 = 4058.7735478745833
BETA2 = 3886.2403842127730
ALPHA_W = 0.018420680743952365  # 0.08 dB/m


def _medium():
    return MediumConstants(frequency=100e9, n_core=2.0)


def _guide(alpha_w=ALPHA_W, num_pas=1):
    return WaveguideSpec(a=3e-3, b=2e-3, feed_point=np.array([0.0, 0.0, 3.0]),
                         length=10.0, alpha_w=alpha_w, num_pas=num_pas)


def test_medium_wavelength():
    med = _medium()
    assert med.wavelength0 == pytest.approx(LAMBDA0, rel=1e-12)
    assert med.guided_wavenumber == pytest.approx(RHO_GUIDED, rel=1e-12)


def test_mode_constants_te10():
    mode = mode_spec(1, 0, _guide(), _medium())
    assert mode.cutoff_wavenumber == pytest.approx(CUTOFF_TE10, rel=1e-12)
    assert mode.propagation_constant == pytest.approx(BETA1, rel=1e-12)


def test_mode_constants_te01():
    mode = mode_spec(0, 1, _guide(), _medium(), index=2)
    assert mode.cutoff_wavenumber == pytest.approx(CUTOFF_TE01, rel=1e-12)
    assert mode.propagation_constant == pytest.approx(BETA2, rel=1e-12)


def test_mode_ordering():
    m1, m2 = te_modes(_guide(), _medium())
    # dominant mode propagates faster, both below the guided wavenumber
    assert m1.propagation_constant > m2.propagation_constant
    assert m2.propagation_constant < m1.guided_wavenumber


def test_evanescent_mode_rejected():
    med = MediumConstants(frequency=20e9, n_core=2.0)
    with pytest.raises(ValueError, match="TE10"):
        mode_spec(1, 0, _guide(), med)


def test_te00_rejected():
    with pytest.raises(ValueError):
        mode_spec(0, 0, _guide(), _medium())


def test_modal_field_te10_center_polarization():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    e = modal_field(mode, wg, med, [0.0, 0.0, 3.0])
    assert e[0] == 0  # TE: no longitudinal component
    assert abs(e[1]) < 1e-18  # v = 0 kills the y term
    assert abs(e[2]) > 0


def test_modal_field_side_wall_zero():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    for side in (-1, 1):
        e = modal_field(mode, wg, med, [0.0, side * wg.a / 2, 3.0])
        assert abs(e[2]) < 1e-12 * abs(
            modal_field(mode, wg, med, [0.0, 0.0, 3.0])[2])


def test_modal_field_te01_top_wall_zero():
    wg, med = _guide(), _medium()
    mode = mode_spec(0, 1, wg, med, index=2)
    for side in (-1, 1):
        e = modal_field(mode, wg, med, [0.0, 0.0, 3.0 + side * wg.b / 2])
        assert abs(e[1]) < 1e-12 * abs(
            modal_field(mode, wg, med, [0.0, 0.0, 3.0])[1])


def test_modal_field_attenuation_ratio():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    e0 = modal_field(mode, wg, med, [0.0, 0.0, 3.0])
    e5 = modal_field(mode, wg, med, [5.0, 0.0, 3.0])
    ratio = np.linalg.norm(e5) / np.linalg.norm(e0)
    assert ratio == pytest.approx(0.9549925860214359, rel=1e-12)


def test_modal_field_outside_cross_section():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    with pytest.raises(ValueError):
        modal_field(mode, wg, med, [0.0, wg.a, 3.0])


def test_coupling_length_full_extraction():
    kappa = 100.0
    assert coupling_length(1, 1, kappa) == pytest.approx(np.pi / 2 / kappa)


def test_coupling_length_half_power():
    kappa = 40.0
    tau = coupling_length(1, 2, kappa)
    assert kappa * tau == pytest.approx(np.pi / 4)
    assert np.sin(kappa * tau) ** 2 == pytest.approx(0.5)


@pytest.mark.parametrize("n_total", range(1, 9))
def test_equal_quota_cascade(n_total):
    # brute-force cascade product: every element pulls exactly 1/N
    for n in range(1, n_total + 1):
        amp = cascade_amplitude(n, n_total, kappa=73.0)
        assert amp ** 2 == pytest.approx(1.0 / n_total, rel=1e-12)


def _placement(x, num_modes=1):
    return PaPlacement(0, 1, x, tuple(Orientation() for _ in range(num_modes)))


def test_h_wg_to_pa_at_feed():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    assert h_wg_to_pa(mode, wg, _placement(0.0)) == pytest.approx(1.0 + 0.0j)


def test_h_wg_to_pa_attenuated_split():
    wg = _guide(num_pas=2)
    mode = mode_spec(1, 0, wg, _medium())
    h = h_wg_to_pa(mode, wg, _placement(5.0))
    assert abs(h) == pytest.approx(0.6752817335586347, rel=1e-12)


def test_h_wg_to_pa_full_wavelength_phase():
    wg = _guide(alpha_w=0.0)
    mode = mode_spec(1, 0, wg, _medium())
    x = 2 * np.pi / mode.propagation_constant  # one guided wavelength
    h = h_wg_to_pa(mode, wg, _placement(x))
    assert np.angle(h) == pytest.approx(0.0, abs=1e-9)


def test_h_magnitude_monotone_in_x():
    wg, med = _guide(), _medium()
    mode = mode_spec(1, 0, wg, med)
    mags = [abs(h_wg_to_pa(mode, wg, _placement(x)))
            for x in np.linspace(0.1, 9.9, 25)]
    assert np.all(np.diff(mags) < 0)
    wg0 = _guide(alpha_w=0.0)
    mags0 = [abs(h_wg_to_pa(mode, wg0, _placement(x)))
             for x in np.linspace(0.1, 9.9, 25)]
    assert np.allclose(mags0, mags0[0], atol=1e-15)


class _MiniScenario:
    """Just enough structure for assemble_H_wp."""

    def __init__(self, waveguides, modes, placements):
        self.waveguides = waveguides
        self.modes = modes
        self.placements = placements


def test_assemble_block_diagonal():
    med = _medium()
    wgs = [WaveguideSpec(a=3e-3, b=2e-3, feed_point=np.array([0.0, y, 3.0]),
                         length=10.0, alpha_w=ALPHA_W, num_pas=1)
           for y in (1.0, 5.0)]
    modes = te_modes(wgs[0], med)
    placements = [[_placement(3.0, num_modes=2)], [_placement(7.0, num_modes=2)]]
    h = assemble_H_wp(_MiniScenario(wgs, modes, placements))
    assert h.shape == (4, 4)
    nz = np.abs(h) > 0
    assert nz.sum() == 4
    # mode q of guide m only reaches its own port: diagonal 2x2 blocks
    assert np.all(nz == np.kron(np.eye(2, dtype=bool), np.eye(2, dtype=bool)))
    assert np.count_nonzero(h[:2, 2:]) == 0 and np.count_nonzero(h[2:, :2]) == 0


def test_assemble_column_norms():
    med = _medium()
    wg = WaveguideSpec(a=3e-3, b=2e-3, feed_point=np.array([0.0, 1.0, 3.0]),
                       length=10.0, alpha_w=ALPHA_W, num_pas=3)
    modes = te_modes(wg, med)
    xs = [1.0, 4.0, 8.5]
    placements = [[PaPlacement(0, n + 1, x,
                               (Orientation(), Orientation()))
                   for n, x in enumerate(xs)]]
    h = assemble_H_wp(_MiniScenario([wg], modes, placements))
    expected = np.sqrt(sum(np.exp(-ALPHA_W * x) for x in xs) / 3)
    for col in range(h.shape[1]):
        assert np.linalg.norm(h[:, col]) == pytest.approx(expected, rel=1e-12)
