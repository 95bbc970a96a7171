"""Uncertainty-aware binary hash retrieval with compressed per-entry bit masks."""

from .bitcore import BitHash, BitMask, WidthMismatch, masked_popcount, popcount, xor
from .codebook import Codebook, CodebookFormatError, build, decode_mask, load
from .combinatorics import (
    CombinationRank,
    CompressedMask,
    MaskDecoder,
    binomial,
    compressed_width,
    lut_feasibility,
    rank_lex,
    saving_lower_bound,
    unrank_factoradic,
)
from .evaluation import EvalProtocol, SweepGrid, average_precision_at_k, evaluate, sweep
from .ingest import SynthConfig, parse, render, synthesize
from .query import (
    QueryEngine,
    QueryParams,
    QueryResult,
    modulated_distance,
    raw_distance,
    stream_query,
    topk_exact,
    topk_filtered,
)
from .uncertainty import (
    ClipTrace,
    UncertaintyScores,
    blend,
    primary_uncertainty,
    secondary_uncertainty,
    top_k_mask,
)

__version__ = "0.1.0"
