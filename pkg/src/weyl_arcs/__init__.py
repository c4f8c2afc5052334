"""Quantum emitters coupled to a photonic Weyl lattice: topology, dynamics and imaging."""
from .lattice import (
    BoxGeometry,
    CubicBlock,
    FiniteLattice,
    LatticeError,
    ModelParams,
    SlabSpec,
    apply_absorbers,
    braid_box,
    build_finite,
    rect_block,
    slab_block,
)
from .dynamics import EmitterSpec, Trajectory, assemble, evolve, single_excited
from .scenarios import preset

__all__ = [
    "BoxGeometry", "CubicBlock", "FiniteLattice", "LatticeError", "ModelParams", "SlabSpec",
    "apply_absorbers", "braid_box", "build_finite", "rect_block", "slab_block",
    "EmitterSpec", "Trajectory", "assemble", "evolve", "single_excited", "preset",
]
__version__ = "0.1.0"
