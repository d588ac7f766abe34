from .auction import TooFewBids, run_auction
from .simulate import (
    AdxSpec,
    DspSpec,
    ImpressionTruth,
    LedgerOracle,
    PriceLaw,
    SealedLedger,
    SimConfig,
    SimResult,
    reference_tables,
    references,
    simulate,
    write_outputs,
    zero_noise,
)
from .tokens import BadToken, PriceKey, encode_price, unseal, unseal_micros

__all__ = [
    "AdxSpec", "BadToken", "DspSpec", "ImpressionTruth", "LedgerOracle", "PriceKey", "PriceLaw",
    "SealedLedger", "SimConfig", "SimResult", "TooFewBids", "encode_price", "reference_tables", "references",
    "run_auction", "simulate", "unseal", "unseal_micros", "write_outputs", "zero_noise",
]
