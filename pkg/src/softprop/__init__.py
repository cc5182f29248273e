"""Soft polyhedral finger toolkit: viscoelastic models, a reduced-order network simulator,
marker tracking, learned proprioception and grasp control."""

__version__ = "0.1.0"
