"""Episodic control through grid-abstracted multi-step patterns and reward revision."""

from .abstraction import (
    BoundedVector,
    GridKey,
    PatternKey,
    ProjectionMatrix,
    build_projection,
    concat_state_action,
    discretize,
    encode_key,
    extract_pattern,
    project,
)
from .memory import EpisodicMemory, MemoryAggregates, MemoryEntry, QEntry
from .shaping import RevisedTransition, ShapingConfig, ShapingPipeline, revise_reward

__version__ = "0.1.0"
