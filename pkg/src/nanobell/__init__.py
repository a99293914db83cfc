"""Bell tests with continuous-variable binning for a nondegenerate parametric
oscillator of two mechanical modes driven through a common pump mode."""

__version__ = "0.1.0"
