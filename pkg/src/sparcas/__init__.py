"""Spot-auction collision avoidance for robots on a roundabout grid."""

__version__ = "0.1.0"
