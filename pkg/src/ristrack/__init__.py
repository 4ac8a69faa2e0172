"""Near-field MIMO user-tracking simulator with RIS and precoder optimization.

A single multi-antenna base station illuminates K reconfigurable intelligent
surfaces; a moving multi-antenna user tracks its own position with an EKF fed
by phase-gradient observations of the per-RIS pilot returns.  RIS profiles are
re-optimized on a slow timescale over the predicted position-uncertainty area,
while transmit power is re-split across RISs at every tracking step.
"""

from ristrack.geometry import ArraySpec, RadiationPattern, Spherical
from ristrack.channel import ChannelSet, RfConfig
from ristrack.precoding import PilotBook, PrecoderSet
from ristrack.tracker import MotionModel, Observation, TrackState
from ristrack.ris_opt import GaussianMixture, RisProfile
from ristrack.scenario import Scenario
from ristrack.scheduler import EpisodeTrace, Policy, TimescaleConfig, run_episode

__version__ = "0.1.0"

__all__ = [
    "ArraySpec",
    "ChannelSet",
    "EpisodeTrace",
    "GaussianMixture",
    "MotionModel",
    "Observation",
    "PilotBook",
    "Policy",
    "PrecoderSet",
    "RadiationPattern",
    "RfConfig",
    "RisProfile",
    "Scenario",
    "Spherical",
    "TimescaleConfig",
    "TrackState",
    "run_episode",
]
