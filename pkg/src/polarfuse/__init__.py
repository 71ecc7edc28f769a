"""Camera-radar fusion for 3D detection at desk scale.

Polar-coordinate proposal-point association, cross-attention feature
fusion with polar offset refinement, a synthetic sensor simulator, and a
center-distance AP evaluation harness.
"""

__version__ = "0.1.0"
