"""
retstat: non-overlapping return-time statistics.
"""

__version__ = "0.1.0"
