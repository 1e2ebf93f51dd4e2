"""Optimal portfolio rebalancing under bid-ask spreads, and its shadow prices."""

from __future__ import annotations

from .admissible import NetTrade, TradePlan, apply_trade, efficient_transform, is_admissible, trade_bounds
from .dynamic import (
    DynamicOptions,
    DynamicSolution,
    shadow_process,
    solve_dynamic,
    verify_dynamic_equivalence,
)
from .errors import ShadowPriceError
from .gfunction import GFunction, expected_utility_g, separable_sqrt_g
from .market import (
    MarketState,
    Quote,
    ScenarioLattice,
    UtilitySpec,
    ZoneSignature,
    build_lattice,
    load_lattice,
    make_terminal_g,
)
from .shadow import ShadowOptions, ShadowQuote, shadow_interval, shadow_quote, verify_shadow
from .static import SolveOptions, SolveStatus, StaticSolution, brute_force_static, solve_static
from .zones import ZoneOptions, classify, zone_map

__version__ = "0.1.0"

__all__ = [
    "DynamicOptions", "DynamicSolution", "GFunction", "MarketState", "NetTrade", "Quote",
    "ScenarioLattice", "ShadowOptions", "ShadowPriceError", "ShadowQuote", "SolveOptions",
    "SolveStatus", "StaticSolution", "TradePlan", "UtilitySpec", "ZoneOptions", "ZoneSignature",
    "apply_trade", "brute_force_static", "build_lattice", "classify", "efficient_transform",
    "expected_utility_g", "is_admissible", "load_lattice", "make_terminal_g", "separable_sqrt_g",
    "shadow_interval", "shadow_process", "shadow_quote", "solve_dynamic", "solve_static",
    "trade_bounds", "verify_dynamic_equivalence", "verify_shadow", "zone_map",
]
