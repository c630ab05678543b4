"""Active learning of a head-headrest contact surrogate for an optimally controlled head-neck model."""

__version__ = "0.1.0"
