"""Discrete-event simulator and protocol library for hardware-enabled
governance mechanisms on AI accelerators: offline licensing, verifiable
cluster configuration, location verification, and verifiable compute
accounting, together with the adversary behaviors each one must survive."""

__version__ = "0.1.0"
