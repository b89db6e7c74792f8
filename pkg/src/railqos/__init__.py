"""Discrete-event simulator for multilayer stream-classification QoS on
railway (GSM-R style) packet networks."""

__version__ = "0.1.0"
