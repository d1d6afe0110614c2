"""Multicast routing laboratory for mobile ad-hoc networks.

Deterministic discrete-event simulation of broadcast forwarding (flooding,
source-specific and non-source-specific multipoint relaying) plus a
trainable neural forwarding policy optimized with multi-agent PPO under
parameter sharing.
"""

from .config import ConfigError, ScenarioConfig, validate
from .engine import Clock, Event, EventKind, EventQueue, PastEvent, Packet, Simulator, run_episode
from .metrics import EpisodeTrace, ZeroGoodput
from .mpr import Decision, DuplicateCache, ForwardingMode, MprState, brute_force_min_mpr, select_mpr
from .nn import LayerShapes, PolicyParams, ShapeMismatch, load_checkpoint, save_checkpoint
from .ppo import NonFiniteGradient, OpenEpisode, PpoConfig, RolloutBuffer, TrainConfig, train
from .radio import HelloMessage, NeighborTable, RadioModel
from .rlenv import ObservationSpec, RewardLedger, observe
from .topology import LinkMatrix, UnknownNode, circular_permutation, covering_neighbors, reach_set

__version__ = "0.1.0"

__all__ = [
    "Clock",
    "ConfigError",
    "Decision",
    "DuplicateCache",
    "EpisodeTrace",
    "Event",
    "EventKind",
    "EventQueue",
    "ForwardingMode",
    "HelloMessage",
    "LayerShapes",
    "LinkMatrix",
    "MprState",
    "NeighborTable",
    "NonFiniteGradient",
    "ObservationSpec",
    "OpenEpisode",
    "Packet",
    "PastEvent",
    "PolicyParams",
    "PpoConfig",
    "RadioModel",
    "RewardLedger",
    "RolloutBuffer",
    "ScenarioConfig",
    "ShapeMismatch",
    "Simulator",
    "TrainConfig",
    "UnknownNode",
    "ZeroGoodput",
    "brute_force_min_mpr",
    "circular_permutation",
    "covering_neighbors",
    "load_checkpoint",
    "observe",
    "reach_set",
    "run_episode",
    "save_checkpoint",
    "select_mpr",
    "train",
    "validate",
    "__version__",
]
