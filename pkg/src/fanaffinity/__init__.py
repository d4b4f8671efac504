"""Fan affinity - political-affinity metrics over sports fan follower sets."""

__version__ = "0.1.0"
