"""Measurement-driven 1-bit configuration search for a dual-polarized RIS.

The control matrix has ``n_x`` rows and ``2 n_y`` columns; columns ``2c`` and
``2c + 1`` hold the H and V bits of physical column ``c``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .phasecfg import PhaseConfig

PowerOracle = Callable[[np.ndarray], float]

BIT_PHASES = {"quadrature": (-np.pi / 2, np.pi / 2), "binary": (-np.pi, 0.0)}


@dataclass(frozen=True)
class Step:
    iteration: int
    kind: str  # "baseline" | "column-pair" | "row"
    index: int
    power: float
    accepted: bool


@dataclass
class OptTrace:
    steps: list = field(default_factory=list)

    @property
    def accepted_powers(self) -> list[float]:
        return [s.power for s in self.steps if s.accepted]

    @property
    def final_power(self) -> float:
        return self.accepted_powers[-1]

    @property
    def timeline(self) -> list[float]:
        """Best-so-far power after every probe."""
        out, best = [], -np.inf
        for s in self.steps:
            if s.accepted:
                best = s.power
            out.append(best)
        return out

    def probes(self, iteration: int) -> int:
        return sum(1 for s in self.steps if s.iteration == iteration)

    def final_power_after(self, iteration: int) -> float:
        return [s.power for s in self.steps if s.accepted and s.iteration <= iteration][-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "iteration", "kind", "index", "power_db", "accepted"])
            for i, s in enumerate(self.steps):
                db = 10 * np.log10(s.power) if s.power > 0 else float("-inf")
                w.writerow([i, s.iteration, s.kind, s.index, repr(float(db)), int(s.accepted)])


class GreedyAborted(RuntimeError):
    def __init__(self, cause: Exception, trace: OptTrace, states: np.ndarray):
        super().__init__(f"measurement failed: {cause}")
        self.trace = trace
        self.states = states


def greedy_optimize(measure: PowerOracle, dims: tuple[int, int], iterations: int = 1,
                    trace: OptTrace | None = None, states: np.ndarray | None = None):
    """Column-pair then row flipping, keeping strict improvements.

    ``dims`` is (n_x, n_y) physical rows and columns. The best power carries
    over between iterations. Passing a previous ``trace`` and ``states``
    continues that session.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n_x, n_y = dims
    phi = np.zeros((n_x, 2 * n_y), dtype=np.uint8) if states is None else states.copy()
    trace = OptTrace() if trace is None else trace
    start = 1 + max((s.iteration for s in trace.steps), default=0)

    def probe():
        try:
            return float(measure(phi))
        except Exception as exc:  # noqa: BLE001 - abort with the partial trace
            raise GreedyAborted(exc, trace, phi.copy()) from exc

    if not trace.steps:
        p_max = probe()
        trace.steps.append(Step(start, "baseline", -1, p_max, True))
    else:
        p_max = trace.final_power
    for it in range(start, start + iterations):
        for c in range(n_y):
            cols = slice(2 * c, 2 * c + 2)
            phi[:, cols] ^= 1
            p = probe()
            keep = p > p_max
            if keep:
                p_max = p
            else:
                phi[:, cols] ^= 1
            trace.steps.append(Step(it, "column-pair", c, p, keep))
        for r in range(n_x):
            phi[r, :] ^= 1
            p = probe()
            keep = p > p_max
            if keep:
                p_max = p
            else:
                phi[r, :] ^= 1
            trace.steps.append(Step(it, "row", r, p, keep))
    return phi, trace


def exhaustive_best(measure: PowerOracle, dims: tuple[int, int], max_bits: int = 16):
    """Global maximizer by enumeration; the first maximum in enumeration order wins."""
    n_x, n_y = dims
    nbits = n_x * 2 * n_y
    if nbits > max_bits:
        raise ValueError(f"{nbits} bits exceeds the enumeration limit of {max_bits}")
    best, best_p = None, -np.inf
    for combo in itertools.product((0, 1), repeat=nbits):
        m = np.array(combo, dtype=np.uint8).reshape(n_x, 2 * n_y)
        p = float(measure(m))
        if p > best_p:
            best, best_p = m, p
    return best, best_p


def second_iteration_gain(trace1: OptTrace, trace2: OptTrace) -> float:
    """Final-power change in dB from a one-iteration run to a two-iteration run."""
    return float(10 * np.log10(trace2.final_power / trace1.final_power))


def bits_to_config(states: np.ndarray, mapping: str = "quadrature") -> PhaseConfig:
    """Control matrix -> dual-pol PhaseConfig (H block then V block, row-wise elements)."""
    lo, hi = BIT_PHASES[mapping]
    s = np.asarray(states)
    h = s[:, 0::2].reshape(-1)
    v = s[:, 1::2].reshape(-1)
    ph = np.where(np.concatenate([h, v]) == 1, hi, lo)
    return PhaseConfig(ph, 1, "dualpol_model2", lo)


def config_to_bits(config: PhaseConfig, dims: tuple[int, int], mapping: str = "quadrature") -> np.ndarray:
    """Inverse of ``bits_to_config``; a unipolar config drives H and V alike."""
    lo, hi = BIT_PHASES[mapping]
    n_x, n_y = dims
    ph = config.phases
    if config.layout == "unipolar":
        ph = np.concatenate([ph, ph])
    half = ph.size // 2
    if half != n_x * n_y:
        raise ValueError(f"config has {half} elements per polarization, expected {n_x * n_y}")
    d_hi = np.abs(np.angle(np.exp(1j * (ph - hi))))
    d_lo = np.abs(np.angle(np.exp(1j * (ph - lo))))
    b = (d_hi < d_lo).astype(np.uint8)
    out = np.empty((n_x, 2 * n_y), dtype=np.uint8)
    out[:, 0::2] = b[:half].reshape(n_x, n_y)
    out[:, 1::2] = b[half:].reshape(n_x, n_y)
    return out
