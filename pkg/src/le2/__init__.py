"""Language-grounded multi-goal agent workbench.

An arm-with-tools simulation, a scripted social partner describing what the
agent achieved, a decision-forest reward model learned from those
descriptions, and a goal-conditioned actor-critic trained with hindsight
goal substitution and two intrinsic motivations.
"""

from le2.env import ArmToolsToys, EnvConfig, WorldState, forward_kinematics
from le2.social_partner import CATALOG, SocialPartner, catalog, describe, oracle_reward
from le2.config import RunConfig, load_config
from le2.orchestrator import Trainer, evaluate, export, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ArmToolsToys",
    "EnvConfig",
    "WorldState",
    "forward_kinematics",
    "CATALOG",
    "SocialPartner",
    "catalog",
    "describe",
    "oracle_reward",
    "RunConfig",
    "load_config",
    "Trainer",
    "train",
    "evaluate",
    "export",
    "load_checkpoint",
]
