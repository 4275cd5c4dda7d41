"""Pattern-based statistical watermarking for order-agnostic token generators."""

from .core import (
    ALTERNATING,
    GAP,
    ConfigError,
    ContractViolation,
    DetectionReport,
    GenerationOrder,
    InputError,
    KeySequence,
    PatternMarkError,
    VocabPartition,
    WatermarkConfig,
    alternating_patterns,
    build_partition,
    rng_stream,
)
from .detector import detect, detect_greenlist_baseline, recover_keys
from .keygen import count_patterns, generate_key_sequence
from .nulldist import (
    NullDistribution,
    brute_force_distribution,
    null_distribution,
    pattern_distribution_alternating,
    pattern_distribution_general,
    tail_probability,
)
from .sampler import DistributionOracle, generate_watermarked, shift_distribution
from .sim import make_oracle, make_order, random_token_attack

__version__ = "0.1.0"
