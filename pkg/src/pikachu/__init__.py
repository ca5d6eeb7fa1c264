"""Checkpointing a proof-of-stake chain onto a proof-of-work ledger."""

from .ledger import SimChain
from .pos import ChainView, ContentStore, PosChain
from .protocol import EventLog, Pikachu, ProtocolParams
from .scenario import load_scenario, parse_scenario, run_scenario
from .taproot import tweak_pubkey, verify_key_path
from .verifier import Verdict, VerificationOutcome, verify

__version__ = "0.1.0"

__all__ = [
    "ChainView",
    "ContentStore",
    "EventLog",
    "Pikachu",
    "PosChain",
    "ProtocolParams",
    "SimChain",
    "Verdict",
    "VerificationOutcome",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "tweak_pubkey",
    "verify",
    "verify_key_path",
]
