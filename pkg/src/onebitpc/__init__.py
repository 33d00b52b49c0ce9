"""Uplink power control for single-UE massive MIMO with 1-bit ADCs.

Link-level Monte-Carlo simulator: composite-pilot MSE estimation, single-shot
offset estimation, differential (1-bit feedback) power control and the
baseline controllers it is compared against.
"""

__version__ = "0.1.0"
