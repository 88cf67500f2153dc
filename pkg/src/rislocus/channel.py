"""Single-bounce geometric multipath scenes, tapped channel matrices and
received-signal composition for the RIS cascade plus the direct link."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .arraygeom import SPEED_OF_LIGHT, ArrayGeometry, CarrierSpec, Direction, steering_far
from .phasecfg import PhaseConfig


@dataclass(frozen=True)
class Node:
    geometry: ArrayGeometry

    @property
    def position(self) -> np.ndarray:
        return self.geometry.centroid()

    @property
    def yaw(self) -> float:
        r = self.geometry.rotation
        return float(np.arctan2(r[1, 0], r[0, 0]))


@dataclass(frozen=True)
class Scatterer:
    position: tuple
    gain: float = 1.0

    def __post_init__(self):
        if not 0 < self.gain <= 1:
            raise ValueError("scatterer gain must lie in (0, 1]")


@dataclass(frozen=True)
class PropagationPath:
    gain: float
    delay: float
    aoa: Direction
    aod: Direction
    kind: str = "los"  # "los" | "nlos"
    length: float = 0.0

    def __post_init__(self):
        if self.delay < 0 or not self.gain > 0:
            raise ValueError("path needs delay >= 0 and gain > 0")


@dataclass(frozen=True)
class Scene:
    carrier: CarrierSpec
    fs: float
    tx: Node
    rx: Node
    ris: Node
    scatterers: tuple = ()
    blocked_direct: bool = True
    seed: int = 0

    def __post_init__(self):
        pts = [self.tx.position, self.rx.position, self.ris.position] + [np.asarray(s.position) for s in self.scatterers]
        for i in range(len(pts)):
            for j in range(i):
                if np.linalg.norm(pts[i] - pts[j]) < 1e-9:
                    raise ValueError("scene positions must be distinct")

    def with_rx_at(self, position) -> "Scene":
        g = self.rx.geometry
        yaw = self.rx.yaw
        new = ArrayGeometry.centered_at(position, g.n_h, g.n_v, g.d_h, g.d_v, yaw)
        return Scene(self.carrier, self.fs, self.tx, Node(new), self.ris, self.scatterers,
                     self.blocked_direct, self.seed)

    # JSON schema: positions in meters, element spacing in wavelengths, yaw in degrees.
    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        carrier = CarrierSpec(float(d["f_c"]))
        lam = carrier.wavelength

        def node(nd):
            sp = nd.get("spacing_wl", 0.5) * lam
            g = ArrayGeometry.centered_at(nd["position"], nd.get("n_h", 1), nd.get("n_v", 1), sp, sp,
                                          np.deg2rad(nd.get("yaw_deg", 0.0)))
            return Node(g)

        scat = tuple(Scatterer(tuple(float(v) for v in s["position"]), float(s.get("gain", 1.0)))
                     for s in d.get("scatterers", []))
        return cls(carrier, float(d["fs"]), node(d["tx"]), node(d["rx"]), node(d["ris"]), scat,
                   bool(d.get("blocked_direct", True)), int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        lam = self.carrier.wavelength

        def node(n: Node):
            g = n.geometry
            return {"position": n.position.tolist(), "yaw_deg": float(np.rad2deg(n.yaw)),
                    "n_h": g.n_h, "n_v": g.n_v, "spacing_wl": (g.d_h or lam / 2) / lam}

        return {
            "f_c": self.carrier.f_c, "fs": self.fs, "seed": self.seed,
            "blocked_direct": self.blocked_direct,
            "tx": node(self.tx), "rx": node(self.rx), "ris": node(self.ris),
            "scatterers": [{"position": list(s.position), "gain": s.gain} for s in self.scatterers],
        }

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def freespace_loss_db(r: float, carrier: CarrierSpec) -> float:
    if not r > 0:
        raise ValueError("range must be positive")
    return float(20 * np.log10(4 * np.pi * r / carrier.wavelength))


def freespace_amplitude(r: float, wavelength: float) -> float:
    return wavelength / (4 * np.pi * r)


def _path(src: Node, dst: Node, via, wavelength: float, gain: float = 1.0) -> PropagationPath:
    p_src, p_dst = src.position, dst.position
    if via is None:
        length = float(np.linalg.norm(p_dst - p_src))
        aoa, aod, kind = dst.geometry.direction_to(p_src), src.geometry.direction_to(p_dst), "los"
    else:
        v = np.asarray(via, dtype=float)
        length = float(np.linalg.norm(v - p_src) + np.linalg.norm(p_dst - v))
        aoa, aod, kind = dst.geometry.direction_to(v), src.geometry.direction_to(v), "nlos"
    return PropagationPath(freespace_amplitude(length, wavelength) * gain, length / SPEED_OF_LIGHT,
                           aoa, aod, kind, length)


def synth_paths(scene: Scene, link: str) -> list[PropagationPath]:
    """Paths for ``link`` in {"tx-ris", "ris-rx", "tx-rx"}.

    LoS (unless ``blocked_direct`` on the tx-rx link) plus one specular
    single-bounce path per scatterer.
    """
    ends = {"tx-ris": (scene.tx, scene.ris), "ris-rx": (scene.ris, scene.rx), "tx-rx": (scene.tx, scene.rx)}
    src, dst = ends[link]
    lam = scene.carrier.wavelength
    paths = []
    if not (link == "tx-rx" and scene.blocked_direct):
        paths.append(_path(src, dst, None, lam))
    for s in scene.scatterers:
        paths.append(_path(src, dst, s.position, lam, s.gain))
    return paths


@dataclass
class ChannelMatrix:
    """Tapped MIMO channel: ``taps[n]`` is the (rx x tx) matrix of tap n."""

    taps: dict
    shape: tuple
    fs: float

    def __post_init__(self):
        for m in self.taps.values():
            if m.shape != self.shape or not np.all(np.isfinite(m)):
                raise ValueError("tap matrices must be finite and share one shape")

    @property
    def max_tap(self) -> int:
        return max(self.taps) if self.taps else 0

    def narrowband(self) -> np.ndarray:
        """Sum of taps: the response to a continuous wave at the carrier."""
        out = np.zeros(self.shape, dtype=complex)
        for m in self.taps.values():
            out += m
        return out

    @classmethod
    def zeros(cls, shape, fs) -> "ChannelMatrix":
        return cls({}, tuple(shape), fs)

    def apply(self, x: np.ndarray, length: int | None = None) -> np.ndarray:
        """Linear convolution with x (tx x T) -> (rx x length)."""
        x = np.asarray(x)
        length = x.shape[1] + self.max_tap if length is None else length
        out = np.zeros((self.shape[0], length), dtype=complex)
        for n, m in self.taps.items():
            if n < length:
                seg = m @ x[:, : length - n]
                out[:, n : n + seg.shape[1]] += seg
        return out


def tap_index(delay: float, fs: float) -> int:
    return int(np.floor(delay * fs))


def channel_matrix(paths, tx_geom: ArrayGeometry, rx_geom: ArrayGeometry,
                   carrier: CarrierSpec, fs: float) -> ChannelMatrix:
    taps: dict = {}
    for p in paths:
        a_rx = steering_far(rx_geom, carrier, p.aoa)
        a_tx = steering_far(tx_geom, carrier, p.aod)
        m = p.gain * np.exp(-2j * np.pi * p.delay * carrier.f_c) * np.outer(a_rx, np.conj(a_tx))
        n = tap_index(p.delay, fs)
        taps[n] = taps[n] + m if n in taps else m
    return ChannelMatrix(taps, (rx_geom.n, tx_geom.n), fs)


@dataclass(frozen=True)
class SceneChannels:
    h1: ChannelMatrix  # tx -> ris
    h2: ChannelMatrix  # ris -> rx
    hd: ChannelMatrix  # tx -> rx


def scene_channels(scene: Scene) -> SceneChannels:
    c, fs = scene.carrier, scene.fs
    tx, rx, ris = scene.tx.geometry, scene.rx.geometry, scene.ris.geometry
    h1 = channel_matrix(synth_paths(scene, "tx-ris"), tx, ris, c, fs)
    h2 = channel_matrix(synth_paths(scene, "ris-rx"), ris, rx, c, fs)
    pd = synth_paths(scene, "tx-rx")
    hd = channel_matrix(pd, tx, rx, c, fs) if pd else ChannelMatrix.zeros((rx.n, tx.n), fs)
    return SceneChannels(h1, h2, hd)


@dataclass
class SignalBlock:
    samples: np.ndarray  # antennas x time
    n_pilots: int
    noise_power: float = 0.0

    def __post_init__(self):
        if self.n_pilots < 1:
            raise ValueError("need at least one pilot")

    @property
    def power(self) -> float:
        """Mean squared magnitude over the block."""
        return float(np.mean(np.abs(self.samples) ** 2))


def ris_signal(h1: ChannelMatrix, h2: ChannelMatrix, w: np.ndarray, x: np.ndarray, length: int) -> np.ndarray:
    """H2 * (diag(w) (H1 * x)), truncated or zero-padded to ``length`` samples."""
    if h1.shape[0] != w.size or h2.shape[1] != w.size or h1.shape[1] != x.shape[0]:
        raise ValueError("dimension mismatch between channels, RIS config and pilots")
    mid = h1.apply(x, length) * w[:, None]
    return h2.apply(mid, length)


def pilots(n_tx: int, n_s: int, seed: int) -> np.ndarray:
    """Unit-power QPSK pilots from a seeded stream."""
    rng = np.random.default_rng([seed, 0x9E37])
    bits = rng.integers(0, 4, size=(n_tx, n_s))
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian with per-sample variance sigma2."""
    return np.sqrt(sigma2 / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def block_length(h1: ChannelMatrix, h2: ChannelMatrix, hd: ChannelMatrix, n_s: int) -> int:
    return n_s + max(h1.max_tap + h2.max_tap, hd.max_tap)


def received(h1: ChannelMatrix, h2: ChannelMatrix, hd: ChannelMatrix, config: PhaseConfig,
             x: SignalBlock, sigma2: float = 0.0, rng_seed=None, polarization=None) -> SignalBlock:
    """r_tot = r_RIS + r_d + w over the full linear-convolution length."""
    if sigma2 < 0:
        raise ValueError("noise power must be non-negative")
    xs = np.asarray(x.samples)
    length = block_length(h1, h2, hd, xs.shape[1])
    r = ris_signal(h1, h2, config.coefficients(polarization), xs, length)
    if hd.shape != (h2.shape[0], h1.shape[1]):
        raise ValueError("direct channel dimensions do not match the cascade")
    r = r + hd.apply(xs, length)
    if sigma2 > 0:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        r = r + complex_noise(r.shape, sigma2, rng)
    return SignalBlock(r, x.n_pilots, sigma2)


def cw_response(h1: ChannelMatrix, h2: ChannelMatrix, hd: ChannelMatrix, config: PhaseConfig,
                polarization=None) -> np.ndarray:
    """Continuous-wave response at the carrier, (rx x tx)."""
    w = config.coefficients(polarization)
    return h2.narrowband() @ (w[:, None] * h1.narrowband()) + hd.narrowband()


def xpd_ratio(a: float) -> float:
    """(1 - a) / a for depolarized power fraction a; a = 0 gives +inf."""
    if not 0 <= a < 1:
        raise ValueError("depolarized fraction must lie in [0, 1)")
    return np.inf if a == 0 else (1 - a) / a


def export_paths_csv(paths, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "type", "azimuth_aoa_deg", "elevation_aoa_deg", "delay_s", "gain"])
        for i, p in enumerate(paths, 1):
            w.writerow([i, "LoS" if p.kind == "los" else "NLoS", np.rad2deg(p.aoa.azimuth),
                        np.rad2deg(p.aoa.elevation), p.delay, p.gain])
