"""RIS phase configurations, b-bit quantization and dual-polarized layouts."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .arraygeom import ArrayGeometry, wrap_angle

LAYOUTS = ("unipolar", "dualpol_model1", "dualpol_model2")


class LayoutError(ValueError):
    pass


def phasor(ph) -> np.ndarray:
    """exp(j ph), with quarter turns mapped to exactly 1, j, -1, -j.

    Sign-opposed states such as +j and -j then negate each other bit for bit.
    """
    ph = np.asarray(ph, dtype=float)
    out = np.atleast_1d(np.exp(1j * ph))
    q = ph / (np.pi / 2)
    k = np.round(q)
    snap = np.abs(q - k) < 1e-14 * np.maximum(1.0, np.abs(k))
    if np.any(snap):
        out[np.atleast_1d(snap)] = np.array([1, 1j, -1, -1j])[np.mod(k[snap], 4).astype(int)]
    return out.reshape(ph.shape)


@dataclass(frozen=True)
class QuantizationGrid:
    bits: float = math.inf
    offset: float = 0.0

    def __post_init__(self):
        if self.bits != math.inf and (int(self.bits) != self.bits or self.bits < 1):
            raise ValueError(f"bits must be a positive integer or inf, got {self.bits}")

    @classmethod
    def one_bit_quadrature(cls) -> "QuantizationGrid":
        """The {-pi/2, +pi/2} 1-bit grid."""
        return cls(1, -np.pi / 2)

    @property
    def points(self) -> np.ndarray:
        if self.bits == math.inf:
            raise ValueError("continuous grid has no finite point set")
        k = np.arange(2 ** int(self.bits))
        return wrap_angle(self.offset + 2 * np.pi * k / 2 ** int(self.bits))

    def contains(self, phases, atol=1e-9) -> bool:
        if self.bits == math.inf:
            return True
        d = np.abs(wrap_angle(np.asarray(phases)[:, None] - self.points[None, :]))
        return bool(np.all(d.min(axis=1) <= atol))


@dataclass(frozen=True, eq=False)
class PhaseConfig:
    """Per-element reflection phases; dual-pol layouts store H block then V block."""

    phases: np.ndarray
    bits: float = math.inf
    layout: str = "unipolar"
    offset: float = 0.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise LayoutError(f"unknown layout {self.layout!r}")
        ph = wrap_angle(np.atleast_1d(np.asarray(self.phases, dtype=float)))
        ph = np.atleast_1d(ph)
        if self.layout != "unipolar" and ph.size % 2:
            raise LayoutError("dual-pol configs need an even number of phases")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)
        if not self.grid.contains(ph):
            raise ValueError(f"phases are not on the {self.bits}-bit grid")

    @property
    def grid(self) -> QuantizationGrid:
        return QuantizationGrid(self.bits, self.offset)

    @property
    def n(self) -> int:
        return self.phases.size

    def coefficients(self, polarization: str | None = None) -> np.ndarray:
        """Reflection coefficients exp(j theta_n), optionally one polarization."""
        ph = self.phases
        if self.layout != "unipolar":
            if polarization is None or polarization.upper() not in ("H", "V"):
                raise LayoutError("dual-pol config needs a polarization selection ('H' or 'V')")
            half = ph.size // 2
            ph = ph[:half] if polarization.upper() == "H" else ph[half:]
        return phasor(ph)

    @classmethod
    def uniform(cls, n: int, phase: float, **kw) -> "PhaseConfig":
        return cls(np.full(n, phase), **kw)

    @classmethod
    def dualpol(cls, h: "PhaseConfig", v: "PhaseConfig", model: int = 1) -> "PhaseConfig":
        if h.bits != v.bits or h.offset != v.offset:
            raise ValueError("H and V configs must share their grid")
        return cls(np.concatenate([h.phases, v.phases]), h.bits, f"dualpol_model{model}", h.offset)

    def to_dict(self) -> dict:
        return {
            "bits": "inf" if self.bits == math.inf else int(self.bits),
            "layout": self.layout,
            "phases_rad": self.phases.tolist(),
            "offset_rad": self.offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseConfig":
        bits = math.inf if d["bits"] in ("inf", None) else int(d["bits"])
        return cls(np.asarray(d["phases_rad"]), bits, d.get("layout", "unipolar"), d.get("offset_rad", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PhaseConfig":
        return cls.from_dict(json.loads(s))


def quantize(config: PhaseConfig, grid: QuantizationGrid) -> PhaseConfig:
    """Map each phase to the nearest grid point (wrapped distance).

    Ties go to the grid point with the smaller index k.
    """
    if grid.bits == math.inf:
        return PhaseConfig(config.phases, math.inf, config.layout, grid.offset)
    pts = grid.points
    d = np.abs(wrap_angle(config.phases[:, None] - pts[None, :]))
    idx = np.argmin(d, axis=1)  # first minimum -> lowest k
    return PhaseConfig(pts[idx], grid.bits, config.layout, grid.offset)


def quantize_aligned(config: PhaseConfig, grid: QuantizationGrid) -> PhaseConfig:
    """Quantize after the global phase rotation that best preserves co-phasing.

    The continuous optimum is only defined up to a common phase. Among all
    rotations, pick the one whose rounded config maximizes |sum exp(j(q_n - theta_n))|,
    the coherent gain toward the direction the config was built for. That
    maximum is also the best over every grid-valued config, so finer nested
    grids never lose gain. Dual-pol layouts align each polarization on its own.
    """
    if grid.bits == math.inf:
        return quantize(config, grid)
    if config.layout != "unipolar":
        half = config.n // 2
        parts = [quantize_aligned(PhaseConfig(p, math.inf), grid).phases
                 for p in (config.phases[:half], config.phases[half:])]
        return PhaseConfig(np.concatenate(parts), grid.bits, config.layout, grid.offset)
    theta = config.phases
    q = quantize(config, grid).phases
    step = 2 * np.pi / 2 ** int(grid.bits)
    # rotating by alpha moves element n up one grid step once alpha passes this point
    cross = np.mod(q + step / 2 - theta, 2 * np.pi)
    cross = np.where(cross > step, cross - 2 * np.pi, cross)
    order = np.argsort(cross, kind="stable")
    base = phasor(q - theta)
    delta = base[order] * (np.exp(1j * step) - 1)
    sums = np.abs(np.concatenate([[base.sum()], base.sum() + np.cumsum(delta)[:-1]]))
    m = int(np.argmax(sums))  # first maximum: plain rounding wins ties
    q = q.copy()
    q[order[:m]] += step
    return PhaseConfig(wrap_angle(q), grid.bits, config.layout, grid.offset)


def as_diagonal(config: PhaseConfig, polarization: str | None = None) -> np.ndarray:
    """Dense diagonal RIS matrix diag(exp(j theta_n))."""
    return np.diag(config.coefficients(polarization))


def dualpol_layout(model: int, n_elements: int, pol_spacing: float) -> tuple[ArrayGeometry, ArrayGeometry]:
    """H and V sub-array geometries of a dual-polarized ULA along y.

    Model 1 alternates H/V elements every ``pol_spacing`` (same-pol pitch is
    twice that); the V sub-array origin is shifted by one ``pol_spacing``.
    Model 2 co-locates H and V in each of ``n_elements`` elements.
    """
    if model == 1:
        if n_elements % 2:
            raise ValueError("model 1 needs an even element count")
        m = n_elements // 2
        h = ArrayGeometry.ula(m, 2 * pol_spacing)
        v = ArrayGeometry.ula(m, 2 * pol_spacing, origin=(0.0, pol_spacing, 0.0))
        return h, v
    if model == 2:
        g = ArrayGeometry.ula(n_elements, pol_spacing)
        return g, g
    raise ValueError(f"unknown dual-pol model {model}")
