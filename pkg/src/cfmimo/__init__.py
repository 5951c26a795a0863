"""Cell-free massive MIMO downlink with full-pilot zero-forcing precoding."""

__version__ = "0.1.0"
