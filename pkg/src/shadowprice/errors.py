"""Exception types raised across the package."""

from __future__ import annotations


class ShadowPriceError(Exception):
    """Base class for all package errors."""


class InvalidQuote(ShadowPriceError, ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class NonPositiveBid(InvalidQuote):
    def __init__(self, index: int, bid: float):
        super().__init__(index, f"bid[{index}] = {bid!r} must be strictly positive")


class BidAboveAsk(InvalidQuote):
    def __init__(self, index: int, bid: float, ask: float):
        super().__init__(index, f"bid[{index}] = {bid!r} exceeds ask[{index}] = {ask!r}")


class DimensionMismatch(ShadowPriceError, ValueError):
    pass


class InvalidState(ShadowPriceError, ValueError):
    pass


class ProbabilitySum(ShadowPriceError, ValueError):
    pass


class LatticeSchemaError(ShadowPriceError, ValueError):
    pass


class NotAdmissible(ShadowPriceError, ValueError):
    pass


class NoTradePointNotFound(ShadowPriceError, RuntimeError):
    """No collapse point reproduces the no-trade classification.

    This cannot happen in exact arithmetic; when raised it almost always means
    ``eps_trade`` is too tight for the accuracy the solver reaches.
    """

    def __init__(self, asset: int, diagnostics: dict):
        super().__init__(f"no no-trade collapse point found for asset {asset}: {diagnostics}")
        self.asset = asset
        self.diagnostics = diagnostics


class RecursionBudgetExceeded(ShadowPriceError, RuntimeError):
    pass
