from .networks import MLP, Adam
from .replay import Batch, ReplayBuffer
from .tabular import TabularQAgent
from .td3 import AgentConfig, DivergenceError, TD3Agent, load_checkpoint, save_checkpoint

__all__ = [
    "MLP", "Adam", "Batch", "ReplayBuffer", "TabularQAgent", "AgentConfig",
    "DivergenceError", "TD3Agent", "load_checkpoint", "save_checkpoint",
]
