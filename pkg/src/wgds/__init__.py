"""Weak Galerkin discretisation of coupled Stokes-Darcy flow with a
Beavers-Joseph-Saffman interface."""
from .mesh import DarcyStokesBox, EdgeClass, PolyMesh, build_rect_mesh, check_colorable
from .wgspace import WgDofMap, WgFunction, WgParams, PressureFunction
from .assembly import assemble_system
from .solver import SolveOptions, solve

__version__ = "0.1.0"
__all__ = ["DarcyStokesBox", "EdgeClass", "PolyMesh", "build_rect_mesh", "check_colorable",
           "WgDofMap", "WgFunction", "WgParams", "PressureFunction", "assemble_system",
           "SolveOptions", "solve", "__version__"]
