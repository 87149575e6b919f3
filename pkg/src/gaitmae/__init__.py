"""Masked-autoencoder gait analysis toolkit.

Learns normative walking kinematics from skeleton time series, localizes
biomechanically inconsistent joints by tiled-occlusion scoring, reconstructs
corrected kinematics, and ships the statistical protocol used to validate
the corrections on a built-in synthetic gait corpus.
"""

__version__ = "0.1.0"
