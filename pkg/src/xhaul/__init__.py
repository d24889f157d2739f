"""Backhaul and fronthaul scheduling simulator and analysis toolkit."""

__version__ = "0.1.0"
