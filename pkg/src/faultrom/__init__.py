"""Reduced-order modeling toolkit for Darcy flow in faulted porous media."""

__version__ = "0.1.0"

from . import meshkit, deform, darcy_fom, snapshots, rom_pod, dlrom, uq, cases

__all__ = ["meshkit", "deform", "darcy_fom", "snapshots", "rom_pod",
           "dlrom", "uq", "cases", "__version__"]
