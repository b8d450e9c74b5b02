"""Threshold-rule Sybil detection over friend-invitation streams, Sybil
topology analysis, and a seeded synthetic workload generator."""

from .detector import ClassifierConfig, StreamDetector, ThresholdRule, Verdict, calibrate_thresholds, classify, process_stream
from .events import Event
from .features import FeatureState, FeatureVector
from .graph import AccountRecord, Edge, SocialGraph
from .simulator import GroundTruth, SimConfig, calibrate_isolation, generate

__version__ = "0.1.0"
