"""RIS-assisted localization and mapping: geometry, patterns, channels,
spectral estimators, the sensing protocol, greedy configuration search and
a TCP testbed emulator."""
from .arraygeom import ArrayGeometry, CarrierSpec, Direction
from .channel import Scene
from .pattern import Codebook, Spectrum, build_codebook
from .phasecfg import PhaseConfig, QuantizationGrid

__version__ = "0.1.0"

__all__ = ["ArrayGeometry", "CarrierSpec", "Direction", "Scene", "Codebook", "Spectrum",
           "build_codebook", "PhaseConfig", "QuantizationGrid", "__version__"]
