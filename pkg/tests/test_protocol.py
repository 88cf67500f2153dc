import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rislocus.arraygeom import SPEED_OF_LIGHT, ArrayGeometry, CarrierSpec, Direction, position_from_measurements
from rislocus.channel import (ChannelMatrix, Node, Scatterer, Scene, channel_matrix, ris_signal, scene_channels,
                              synth_paths)
from rislocus.pattern import Codebook, CodebookEntry, build_codebook
from rislocus.phasecfg import PhaseConfig, QuantizationGrid
from rislocus.protocol import (MeasurementError, SensingSetup, SimulatedMeasurement, beam_sweep, cancel_los,
                               intersect_rays, localize, los_channel_estimate, map_scatterers, onoff_direct,
                               ris_aod_to_ue_aoa, ue_aoa_to_ris_aod)

C = CarrierSpec(3.5e9)
LAM = C.wavelength
FS = 100e6
TARGETS = np.deg2rad(np.arange(-60, 60.1, 2))


def node(pos, n_h=1, n_v=1, yaw=0.0):
    return Node(ArrayGeometry.centered_at(pos, n_h, n_v, LAM / 2, LAM / 2, yaw))


def scene(ue=(5.0, 0.8, 0.0), scatterers=(), blocked=True, n_ris=(16, 4)):
    return Scene(C, FS, node([7.0, -3.0, 0.0], yaw=np.pi), node(list(ue), 8, yaw=np.pi),
                 node([0.0, 0.0, 0.0], *n_ris), tuple(scatterers), blocked, seed=3)


def codebook(s, bits=np.inf, targets=TARGETS):
    grid = QuantizationGrid.one_bit_quadrature() if bits == 1 else None
    inc = s.ris.geometry.direction_to(s.tx.position)
    return build_codebook(inc, targets, s.ris.geometry, s.carrier, grid)


def true_tau(s):
    return float(np.linalg.norm(s.rx.position - s.ris.position) / SPEED_OF_LIGHT)


def test_frame_conversion_roundtrip():
    for phi in np.linspace(-3, 3, 13):
        a = ue_aoa_to_ris_aod(phi, np.pi, 0.3)
        assert ris_aod_to_ue_aoa(a, np.pi, 0.3) == pytest.approx(phi)
    s = scene()
    los = synth_paths(s, "ris-rx")[0]
    assert ue_aoa_to_ris_aod(los.aoa.azimuth, s.rx.yaw, s.ris.yaw) == pytest.approx(los.aod.azimuth)


def test_beam_sweep_single_entry_and_errors():
    s = scene()
    m = SimulatedMeasurement(s)
    cb = codebook(s, targets=[0.1])
    idx, p = beam_sweep(cb, m)
    assert idx == 0 and p.shape == (1,)

    def broken(cfg):
        raise RuntimeError("link down")

    with pytest.raises(MeasurementError) as e:
        beam_sweep(codebook(s), broken)
    assert e.value.index == 0


def test_beam_sweep_los_within_one_bin():
    s = scene()
    idx, powers = beam_sweep(codebook(s), SimulatedMeasurement(s))
    truth = s.ris.geometry.direction_to(s.rx.position).azimuth
    assert abs(TARGETS[idx] - truth) <= np.deg2rad(2)
    assert powers[idx] == powers.max()


def test_onoff_exact():
    s = scene(scatterers=[Scatterer((2.0, 3.0, 0.0), 0.6)])
    m = SimulatedMeasurement(s)
    assert np.abs(m.direct_signal()).max() > 0
    assert np.array_equal(onoff_direct(m, s.ris.geometry.n), m.direct_signal())
    s0 = scene()
    m0 = SimulatedMeasurement(s0)
    assert np.array_equal(onoff_direct(m0, s0.ris.geometry.n), np.zeros_like(m0.direct_signal()))


def test_onoff_noise_halves():
    s = scene(n_ris=(2, 1))
    sigma2 = 0.8
    m = SimulatedMeasurement(s, n_pilots=12_500, sigma2=sigma2, seed=4)
    est = onoff_direct(m, s.ris.geometry.n)
    resid = est - m.direct_signal()
    assert resid.size >= 100_000
    assert np.mean(np.abs(resid) ** 2) == pytest.approx(sigma2 / 2, rel=0.02)


def test_los_estimate_rank_and_phase():
    rx, ris = ArrayGeometry.ula(4, LAM / 2), ArrayGeometry(8, 2, LAM / 2, LAM / 2)
    h = los_channel_estimate(0.3, 20e-9, rx, ris, C)
    sv = np.linalg.svd(h, compute_uv=False)
    assert np.sum(sv > 1e-12 * sv[0]) == 1
    tau = 70 / C.f_c  # integer number of carrier cycles
    h = los_channel_estimate(0.0, tau, ArrayGeometry(1, 1), ArrayGeometry(1, 1), C)
    assert np.angle(h[0, 0]) == pytest.approx(0.0, abs=1e-9)
    assert abs(h[0, 0]) == pytest.approx(LAM / (4 * np.pi * SPEED_OF_LIGHT * tau))
    with pytest.raises(ValueError):
        los_channel_estimate(0.0, 0.0, rx, ris, C)


def test_los_reconstruction_matches_simulation():
    s = scene()
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    cfg = codebook(s).entries[20].config
    phi_ue = s.rx.geometry.direction_to(s.ris.position).azimuth
    tau = true_tau(s)
    r_los = setup.los_signal(phi_ue, tau, cfg, m.length)
    sim = m(cfg).samples
    # cancelling from zeros yields minus the delayed reconstruction
    expected = -cancel_los(np.zeros_like(sim), r_los, tau, FS)
    assert np.linalg.norm(sim - expected) / np.linalg.norm(sim) < 1e-6
    assert np.linalg.norm(cancel_los(sim, r_los, tau, FS)) < 1e-6 * np.linalg.norm(sim)


def test_cancel_los_trivial():
    rng = np.random.default_rng(0)
    r = rng.standard_normal((3, 20)) + 1j * rng.standard_normal((3, 20))
    assert np.array_equal(cancel_los(r, np.zeros((3, 20)), 55e-9, FS), r)
    los = rng.standard_normal((3, 20)) + 0j
    tot = np.zeros((3, 20), complex)
    tot[:, 5:] = los[:, :15]
    assert np.allclose(cancel_los(tot, los, 55e-9, FS), 0)
    # shift beyond the block leaves it untouched
    assert np.array_equal(cancel_los(r, los, 1e-6, FS), r)


def test_cancel_los_energy_bookkeeping():
    s = scene(scatterers=[Scatterer((2.0, 3.0, 0.0), 0.8)])
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    cfg = codebook(s).entries[40].config
    phi_ue = s.rx.geometry.direction_to(s.ris.position).azimuth
    tau = true_tau(s)
    total = m(cfg).samples - onoff_direct(m, s.ris.geometry.n)
    resid = cancel_los(total, setup.los_signal(phi_ue, tau, cfg, m.length), tau, FS)
    # the LoS-LoS cascade alone, built independently from the scene paths
    los = lambda link, a, b: channel_matrix([p for p in synth_paths(s, link) if p.kind == "los"],  # noqa: E731
                                            a, b, C, FS)
    h1 = los("tx-ris", s.tx.geometry, s.ris.geometry)
    h2 = los("ris-rx", s.ris.geometry, s.rx.geometry)
    r_ll = ris_signal(h1, h2, cfg.coefficients(), m.x, m.length)
    nlos_share = np.sum(np.abs(total - r_ll) ** 2) / np.sum(np.abs(total) ** 2)
    got = np.sum(np.abs(resid) ** 2) / np.sum(np.abs(total) ** 2)
    assert 0 < nlos_share < 1
    assert got == pytest.approx(nlos_share, rel=0.01)


@pytest.mark.parametrize("ue", [(5.0, 0.8, 0.0), (4.0, -1.0, 0.0), (6.0, 1.5, 0.0)])
def test_localize_one_bit_music(ue):
    s = scene(ue, [Scatterer((2.0, 3.0, 0.0), 0.5)], n_ris=(32, 32))
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    r = localize(m, codebook(s, 1), setup, 0.0, true_tau(s))
    truth = s.ris.geometry.direction_to(s.rx.position).azimuth
    assert abs(np.rad2deg(r.phi_est - truth)) <= 2.0
    assert np.allclose(r.position, position_from_measurements(r.phi_est, r.z, r.r_est))
    assert r.r_est == pytest.approx(SPEED_OF_LIGHT * r.tau_est)
    assert r.measurements == len(TARGETS) + 3
    assert np.all(np.abs(setup.angle_grid) <= np.pi / 2)


def test_localize_global_phase_invariance():
    s = scene()
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    cb = codebook(s)
    rot = Codebook(tuple(CodebookEntry(e.target, PhaseConfig(e.config.phases + 0.7)) for e in cb.entries),
                   cb.incident, cb.bits)
    a = localize(m, cb, setup, 0.0, true_tau(s))
    b = localize(m, rot, setup, 0.0, true_tau(s))
    assert a.sweep_index == b.sweep_index
    assert a.phi_est == pytest.approx(b.phi_est, abs=1e-12)


def test_intersect_rays_exact():
    p1, p2 = np.array([0.0, 0.0]), np.array([5.0, 1.0])
    target = np.array([2.0, 3.0])
    b1 = np.arctan2(*(target - p1)[::-1])
    b2 = np.arctan2(*(target - p2)[::-1])
    assert np.linalg.norm(intersect_rays(p1, b1, p2, b2) - target) < 1e-6
    assert intersect_rays(p1, 0.3, p2, 0.3) is None  # parallel
    assert intersect_rays(p1, 0.3, p2, 0.3 + 5e-4) is None  # |sin| < 1e-3
    assert intersect_rays(p1, b1 + np.pi, p2, b2 + np.pi) is None  # behind both origins


@given(st.floats(0.5, 6.0), st.floats(-4.0, 4.0), st.floats(3.0, 8.0), st.floats(-3.0, 3.0))
def test_intersect_rays_property(sx, sy, ux, uy):
    target, ue = np.array([sx, sy]), np.array([ux, uy])
    b1 = np.arctan2(sy, sx)
    d = target - ue
    if np.linalg.norm(d) < 0.1:
        return
    b2 = np.arctan2(d[1], d[0])
    if abs(np.sin(b2 - b1)) < 1e-2:
        return
    assert np.linalg.norm(intersect_rays(np.zeros(2), b1, ue, b2) - target) < 1e-6


def test_map_scatterers_finds_front_scatterer():
    truth = np.array([2.0, 3.0, 0.0])
    s = scene((5.0, 0.0, 0.0), [Scatterer(tuple(truth), 0.5)], n_ris=(32, 32))
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    cb = codebook(s)
    loc = localize(m, cb, setup, 0.0, true_tau(s))
    res = map_scatterers(m, cb, loc, setup)
    best = res.strongest()
    assert best is not None
    assert np.linalg.norm(best.position - truth) < 0.3
    assert res.diagnostics["measurements"] == 3 * len(cb)
    for sc in res.scatterers:
        assert s.ris.geometry.to_local(sc.position)[0] > 0  # in front of the RIS
        ray = sc.position - loc.world_position
        bearing = sc.nlos_azimuth + setup.ue_yaw
        cross = ray[0] * np.sin(bearing) - ray[1] * np.cos(bearing)
        assert abs(cross) < 1e-9 * max(1, np.linalg.norm(ray))


def test_map_without_scatterers_is_empty():
    s = scene((5.0, 0.0, 0.0))
    m = SimulatedMeasurement(s)
    setup = SensingSetup.from_scene(s, m.x)
    cb = codebook(s)
    loc = localize(m, cb, setup, 0.0, true_tau(s))
    res = map_scatterers(m, cb, loc, setup)
    assert res.scatterers == [] and res.strongest() is None


@given(st.floats(1.0, 4.0), st.floats(-3.0, 3.0), st.floats(0.1, 1.0), st.booleans())
def test_onoff_bit_exact_property(sx, sy, gain, blocked):
    s = scene(scatterers=[Scatterer((sx, sy, 0.0), gain)], blocked=blocked, n_ris=(4, 2))
    m = SimulatedMeasurement(s, n_pilots=16)
    assert np.array_equal(onoff_direct(m, s.ris.geometry.n), m.direct_signal())


def test_fixed_point_grid_is_fine():
    s = scene(scatterers=[Scatterer((2.0, 3.0, 0.0), 0.6)], blocked=False)
    m = SimulatedMeasurement(s)
    cfg = codebook(s).entries[10].config
    ch = m.channels
    raw = ris_signal(ch.h1, ch.h2, cfg.coefficients(), m.x, m.length) + ch.hd.apply(m.x, m.length)
    # two roundings of at most half a step per real component
    assert np.abs(m(cfg).samples - raw).max() <= np.sqrt(2) * m.step + 1e-3 * m.step
