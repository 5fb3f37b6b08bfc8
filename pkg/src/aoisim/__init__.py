"""AoI-aware V2V status updates over a shared interference channel.

The package simulates M vehicle-to-vehicle links that each push batched
status samples through a two-batch buffer, learns joint packet-dropping
and power-control policies with GNN-enhanced multi-agent PPO (centralized
training, decentralized execution), and ships classical power-control
baselines plus an experiment harness with a CLI.
"""

from aoisim.env import EpisodeResult, JointAction, V2VEnv
from aoisim.mappo import (PolicyBundle, TrainConfig, TrainResult, evaluate,
                          load_checkpoint, save_checkpoint, train)
from aoisim.queueing import ArrivalProcess, QueueState
from aoisim.topology import ChannelRealization, LinkGeometry, NetworkConfig

__version__ = "0.1.0"

__all__ = [
    "ArrivalProcess",
    "ChannelRealization",
    "EpisodeResult",
    "JointAction",
    "LinkGeometry",
    "NetworkConfig",
    "PolicyBundle",
    "QueueState",
    "TrainConfig",
    "TrainResult",
    "V2VEnv",
    "evaluate",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "__version__",
]
