"""Nodal discontinuous Galerkin spaces and assembly on triangles."""
