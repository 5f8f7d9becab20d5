"""Cross-chain pseudonym management for vehicular edge metaverses.

A discrete-event simulator and library: pseudonym lifecycle protocols
over a subchain/relay/main-chain ledger substrate, a time-decaying
privacy metric with closed-form average, newsvendor-optimal pseudonym
generation, and a multi-agent policy-gradient trainer for the
generation strategy.
"""

from . import chain, crypto, economics, harness, madrl, privacy, protocols, scenario

__all__ = [
    "chain",
    "crypto",
    "economics",
    "harness",
    "madrl",
    "privacy",
    "protocols",
    "scenario",
]

__version__ = "0.1.0"
