"""Rotating Oberbeck-Boussinesq simulator with nudging data assimilation.

Modules
-------
grid          MAC grid, field containers and discrete operators
elliptic      Poisson, Helmholtz and nonlocal Helmholtz solvers
transforms    changes of variables theta -> Theta -> Z and forcing potential
solver        time stepping of the transformed system
interpolant   coarse observation operators
assimilation  nudging, twin experiments and observation streams
diagnostics   energy balances, maximum principle, absorbing-set checks
config, cli   run configuration and command-line front end
"""

from .errors import RobsimError

__version__ = "0.1.0"

__all__ = ["RobsimError", "__version__"]
