"""
WDAIL Lab - adversarial imitation learning on toy control tasks
"""

__version__ = "1.0.0"
__description__ = "Wasserstein adversarial imitation learning with PPO, GAIL and behavior cloning baselines"
