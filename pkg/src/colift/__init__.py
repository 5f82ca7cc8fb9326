"""Shared whole-body control for collaborative payload lifting.

Library layout:
  spatial     6D vector algebra (rotations, poses, wrench transforms)
  model       floating-base kinematic trees and their dynamics
  coupled     multi-agent + payload composite system and constraints
  control     online shared controller (momentum, payload pose, force QP)
  ergonomics  static force layer, posture optimization, reference generation
  sim         fixed-step constrained rigid-body simulator
  cli         command-line entry point (validate / optimize / run / report-data)
"""

__version__ = "0.1.0"
