"""Mean-square analysis and H2 synthesis for feedback loops over random-delay channels."""
from .ratfun import Poly, RatFn, RootSet, classify, impulse_prefix, roots_in_z
from .channel import ChannelSpec, ChannelStats, channel_stats, frv
from .analysis import LoopModel, StabilityReport, ms_stability, internal_stability
from .synth import (
    CoprimePair,
    SynthesisResult,
    StabilizabilityReport,
    coprime_factorize,
    stabilizability_index,
    stabilizability_report,
    synthesize,
    youla_controller,
)

__version__ = "0.1.0"
