"""Training-free propagation and association heads for visual tracking.

Propagation heads carry a first-frame state forward (boxes with a correlation
head, masks and poses with attention over a memory of past frames); the
association head links given per-frame detections into identities.
"""
from .core import Box, FeatureMap, LabelMap, Mask, Observation, Pose, TrackError
from .features import FeatureSource

__version__ = "0.1.0"

__all__ = ["Box", "FeatureMap", "FeatureSource", "LabelMap", "Mask", "Observation", "Pose", "TrackError"]
