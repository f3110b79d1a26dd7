"""Mini Flash Crash forensics on consolidated trade and quote tapes."""

from .classify import ClassifierConfig, CrashType, classify_crash
from .detect import CrashEvent, DetectorConfig, Direction, detect_crashes, detect_stream
from .nbbo import NbboHistory, NbboState, NbboStatus
from .tape import ExchangeId, QuoteRecord, TradeRecord, load_merged_stream

__version__ = "0.1.0"

__all__ = [
    "ClassifierConfig", "CrashType", "classify_crash", "CrashEvent", "DetectorConfig",
    "Direction", "detect_crashes", "detect_stream", "NbboHistory", "NbboState", "NbboStatus",
    "ExchangeId", "QuoteRecord", "TradeRecord", "load_merged_stream",
]
