"""SDN controller for multi-vendor optical circuit switches."""

__version__ = "0.1.0"
