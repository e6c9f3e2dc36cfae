"""Correlated photon-pair source calculator for rephased-ensemble protocols.

Core layout:
  model       parameter/timing types, units, config ingestion
  analytic    closed-form rates, efficiencies, correlation profiles
  selection   transition-forbidding (noise suppression) checks
  feasibility nonclassicality regions and their maxima
  compare     comb-rephasing and inverted-ensemble comparisons
  oracle      discrete-atom Monte-Carlo verification layer
  verify      oracle-vs-analytic equivalence suite
  service     FastAPI app wrapping all of the above
  cli         thin HTTP client emitting CSV + run manifests
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Broadening,
    DecayRates,
    GeometryConfig,
    OpticalDepths,
    ProtocolParams,
    TimingSequence,
    WritePulse,
    build_params,
    default_geometry,
    derive_timing,
    parse_config,
    serialize_params,
)
