"""Toolkit for the two-dimensional magnetic Lorentz gas.

Three levels of description of a unit-speed charge among Poisson hard-disk
obstacles in a transverse magnetic field, built to cross-validate each
other:

* :mod:`maglorentz.lorentz_sim` - exact event-driven microscopic dynamics
  over the lazy infinite obstacle field of :mod:`maglorentz.medium`, with
  the arc geometry of :mod:`maglorentz.geometry`;
* :mod:`maglorentz.boltzmann_process` and :mod:`maglorentz.operators` - the
  memory-carrying velocity jump process and its angular collision
  operators, inverted three independent ways to produce the field-dependent
  diffusion coefficient;
* :mod:`maglorentz.kinetic_solver` - the scaled kinetic equation with
  delayed memory terms, compared against the heat equation it converges to.

The :mod:`maglorentz.cli` front end drives reproducible experiments from
flat config files.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
