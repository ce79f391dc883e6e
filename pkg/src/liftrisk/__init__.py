"""Lifting-risk prediction: motion forecasting with a guided mixture of LSTM
experts, the revised NIOSH lifting equation, and an online alerting engine."""

from .core import ActionLabel, FrameError, MotionPrediction, StateFrame, WindowAssembler
from .engine import HapticCommand, HapticLevel, NioshContext, RiskEngine, TransitionTracker
from .gmoe import GmoeModel, predict
from .kinematics import Skeleton, niosh_geometry
from .rnle import NioshInput, rwl
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ActionLabel", "FrameError", "MotionPrediction", "StateFrame", "WindowAssembler",
    "HapticCommand", "HapticLevel", "NioshContext", "RiskEngine", "TransitionTracker",
    "GmoeModel", "predict", "Skeleton", "niosh_geometry", "NioshInput", "rwl",
    "TrainConfig", "train",
]
