"""
slowenv: the parabolic Anderson model on the torus with a potential that is
renewed every tau time units.
"""

__version__ = "0.1.0"
