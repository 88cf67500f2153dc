"""TCP testbed emulator: a RIS configuration server plus a VNA-like S21 endpoint.

Wire protocol: one JSON object per line in each direction.

    {"cmd": "hello"}                       -> {"ok": true, "ris": {"rows": R, "cols": 2C}, "freq_points": F}
    {"cmd": "set_config", "rows": [b64..]} -> {"ok": true, "latency_ms": 10}
    {"cmd": "get_config"}                  -> {"ok": true, "rows": [b64..]}
    {"cmd": "measure", "pol": "HH"}        -> {"ok": true, "s21": [[re, im], ...]}

Each row is the packed (MSB-first) bit row of the control matrix, base64
encoded. Errors come back as {"err": "parse" | "dims" | "cmd"}.
"""
from __future__ import annotations

import base64
import json
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

import numpy as np

from .arraygeom import SPEED_OF_LIGHT, element_positions
from .channel import Scene, synth_paths
from .greedyopt import BIT_PHASES

log = logging.getLogger(__name__)

FREQ_START, FREQ_STOP, FREQ_POINTS = 3.4e9, 3.6e9, 801
POLS = ("HH", "VV", "HV")


def encode_rows(states: np.ndarray) -> list[str]:
    return [base64.b64encode(np.packbits(np.asarray(r, dtype=np.uint8)).tobytes()).decode() for r in states]


def decode_rows(rows: list[str], cols: int) -> np.ndarray:
    out = []
    for r in rows:
        raw = np.frombuffer(base64.b64decode(r, validate=True), dtype=np.uint8)
        if raw.size * 8 < cols or raw.size * 8 >= cols + 8:
            raise ValueError("row length")
        out.append(np.unpackbits(raw, count=cols))
    return np.array(out, dtype=np.uint8)


@dataclass
class ElementModel:
    """Per-state element phase; state 1 may drift linearly with frequency."""

    mapping: str = "quadrature"
    dispersive: bool = False
    slope_deg_per_mhz: float = 0.2
    f_ref: float = 3.5e9

    def phases(self, freqs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = BIT_PHASES[self.mapping]
        p0 = np.full(freqs.shape, lo)
        p1 = np.full(freqs.shape, hi)
        if self.dispersive:
            p1 = p1 + np.deg2rad(self.slope_deg_per_mhz) * (freqs - self.f_ref) / 1e6
        return p0, p1


class EmulatorModel:
    """Frequency-swept SISO response of a scene with a dual-pol 1-bit RIS.

    The cascade for each frequency is precomputed per element, so a probe
    costs one matrix-vector product. Tx and Rx use their first element.
    """

    def __init__(self, scene: Scene, freqs=None, element: ElementModel | None = None,
                 depolarized_fraction: float = 0.1, noise_std: float = 0.0, seed: int | None = None):
        self.scene = scene
        self.freqs = (np.linspace(FREQ_START, FREQ_STOP, FREQ_POINTS) if freqs is None
                      else np.asarray(freqs, dtype=float))
        self.element = element or ElementModel()
        self.depolarized_fraction = depolarized_fraction
        self.noise_std = noise_std
        self.seed = scene.seed if seed is None else seed
        ris = scene.ris.geometry
        self.rows, self.cols = ris.n_v, ris.n_h
        self.cascade, self.direct = self._precompute()
        self.state_phases = self.element.phases(self.freqs)

    @property
    def dims(self) -> tuple[int, int]:
        return self.rows, self.cols

    def _precompute(self):
        sc = self.scene
        tx, rx, ris = sc.tx.geometry, sc.rx.geometry, sc.ris.geometry
        u_ris = element_positions(ris)
        u_tx0 = element_positions(tx)[0]
        u_rx0 = element_positions(rx)[0]
        f = self.freqs
        k = 2 * np.pi * f / SPEED_OF_LIGHT  # (F,)

        def amp(p):
            # free-space amplitude scales with wavelength; scatterer gain does not
            return p.gain * (sc.carrier.f_c / f) * np.exp(-2j * np.pi * p.delay * f)

        def phase(u, d):
            return np.exp(-1j * np.outer(k, u @ d.unit()))

        h1 = sum(amp(p)[:, None] * phase(u_ris, p.aoa) * np.conj(phase(u_tx0, p.aod)) for p in synth_paths(sc, "tx-ris"))
        h2 = sum(amp(p)[:, None] * phase(u_rx0, p.aoa) * np.conj(phase(u_ris, p.aod)) for p in synth_paths(sc, "ris-rx"))
        d = np.zeros(f.size, dtype=complex)
        for p in synth_paths(sc, "tx-rx"):
            d += amp(p) * (phase(u_rx0, p.aoa) * np.conj(phase(u_tx0, p.aod)))[:, 0]
        return h1 * h2, d

    def check_dims(self, states: np.ndarray) -> None:
        if states.shape != (self.rows, 2 * self.cols):
            raise ValueError(f"config must be {self.rows}x{2 * self.cols}, got {states.shape}")

    def coefficients(self, states: np.ndarray, pol: str) -> np.ndarray:
        """Element reflection coefficients, shape (freqs, N)."""
        p0, p1 = self.state_phases
        s = np.asarray(states)
        h = s[:, 0::2].reshape(-1)
        v = s[:, 1::2].reshape(-1)

        def w(bits):
            return np.where(bits[None, :] == 1, np.exp(1j * p1)[:, None], np.exp(1j * p0)[:, None])

        if pol == "HH":
            return w(h)
        if pol == "VV":
            return w(v)
        if pol == "HV":
            return np.sqrt(self.depolarized_fraction) * (w(h) + w(v)) / 2
        raise ValueError(f"unknown polarization pair {pol!r}")

    def s21(self, states: np.ndarray, pol: str = "HH", counter: int = 0) -> np.ndarray:
        self.check_dims(states)
        out = np.einsum("fn,fn->f", self.cascade, self.coefficients(states, pol))
        if pol != "HV":
            out = out + self.direct
        if self.noise_std > 0:
            rng = np.random.default_rng([self.seed, counter])
            out = out + self.noise_std / np.sqrt(2) * (rng.standard_normal(out.shape)
                                                       + 1j * rng.standard_normal(out.shape))
        return out

    def power(self, states: np.ndarray, pol: str = "HH", counter: int = 0) -> float:
        return band_power(self.s21(states, pol, counter))


def band_power(s21: np.ndarray) -> float:
    """Received power integrated over the swept band (mean |S21|^2)."""
    return float(np.mean(np.abs(s21) ** 2))


class EmulatorState:
    """Single owner of the RIS state; commands are serialized by a lock."""

    def __init__(self, model: EmulatorModel, latency_ms: float = 10.0, realtime: bool = False):
        self.model = model
        self.latency_ms = latency_ms
        self.realtime = realtime
        self.config = np.zeros((model.rows, 2 * model.cols), dtype=np.uint8)
        self.counter = 0
        self.lock = threading.Lock()

    def handle_line(self, line: str) -> str:
        with self.lock:
            return json.dumps(self._handle(line), separators=(",", ":"))

    def _handle(self, line: str) -> dict:
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError
        except ValueError:
            return {"err": "parse"}
        self.counter += 1
        cmd = req.get("cmd")
        m = self.model
        if cmd == "hello":
            return {"ok": True, "ris": {"rows": m.rows, "cols": 2 * m.cols}, "freq_points": int(m.freqs.size)}
        if cmd == "set_config":
            try:
                states = decode_rows(req["rows"], 2 * m.cols)
                m.check_dims(states)
            except (KeyError, TypeError, ValueError):
                return {"err": "dims"}
            self.config = states
            if self.realtime:
                time.sleep(self.latency_ms / 1000)
            return {"ok": True, "latency_ms": self.latency_ms}
        if cmd == "get_config":
            return {"ok": True, "rows": encode_rows(self.config)}
        if cmd == "measure":
            pol = req.get("pol", "HH")
            if pol not in POLS:
                return {"err": "cmd"}
            s = m.s21(self.config, pol, self.counter)
            return {"ok": True, "s21": [[float(v.real), float(v.imag)] for v in s]}
        return {"err": "cmd"}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            self.wfile.write((self.server.state.handle_line(line) + "\n").encode())


class EmulatorServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, state: EmulatorState):
        super().__init__(address, _Handler)
        self.state = state

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve(host: str, port: int, scene: Scene, seed: int | None = None, **kw) -> None:
    model_kw = {k: kw.pop(k) for k in ("element", "noise_std", "depolarized_fraction") if k in kw}
    state = EmulatorState(EmulatorModel(scene, seed=seed, **model_kw), **kw)
    with EmulatorServer((host, port), state) as srv:
        log.info("emulator listening on %s:%d", *srv.server_address[:2])
        srv.serve_forever()


class EmulatorError(RuntimeError):
    pass


class RemoteRIS:
    """Client for the emulator (or anything speaking the same protocol)."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")
        self.info = self.call({"cmd": "hello"})

    @classmethod
    def from_address(cls, addr: str, **kw) -> "RemoteRIS":
        host, _, port = addr.rpartition(":")
        return cls(host, int(port), **kw)

    def call(self, req: dict) -> dict:
        self.sock.sendall((json.dumps(req) + "\n").encode())
        line = self.rfile.readline()
        if not line:
            raise EmulatorError("connection closed")
        resp = json.loads(line)
        if "err" in resp:
            raise EmulatorError(resp["err"])
        return resp

    @property
    def dims(self) -> tuple[int, int]:
        ris = self.info["ris"]
        return ris["rows"], ris["cols"] // 2

    def set_config(self, states: np.ndarray) -> dict:
        return self.call({"cmd": "set_config", "rows": encode_rows(states)})

    def measure(self, pol: str = "HH") -> np.ndarray:
        s = np.asarray(self.call({"cmd": "measure", "pol": pol})["s21"], dtype=float)
        return s[:, 0] + 1j * s[:, 1]

    def power(self, states: np.ndarray, pol: str = "HH") -> float:
        """Greedy-compatible oracle: apply the config, measure, integrate."""
        self.set_config(states)
        return band_power(self.measure(pol))

    def close(self):
        self.rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def phase_characterization(client, pols=("HH",)) -> dict:
    """Delta-phi(f) in degrees between the all-'1' and all-'0' states, per polarization pair."""
    rows, cols = client.dims
    zero = np.zeros((rows, 2 * cols), dtype=np.uint8)
    out = {}
    for pol in pols:
        client.set_config(zero)
        s0 = client.measure(pol)
        client.set_config(zero + 1)
        s1 = client.measure(pol)
        d = np.unwrap(np.angle(s1) - np.angle(s0))
        # anchor the unwrapped curve at the branch nearest 180 degrees mid-band
        mid = d[d.size // 2]
        d = d - 2 * np.pi * np.round((mid - np.pi) / (2 * np.pi))
        out[pol] = np.rad2deg(d)
    return out
