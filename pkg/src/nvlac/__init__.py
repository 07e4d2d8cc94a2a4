"""Simulation of the zero-field level anti-crossing of NV-centre ensembles.

Modules
-------
spin_core
    Ground-state spin Hamiltonian, level sweeps and anti-crossing search.
driven_floquet
    Quasienergies of the longitudinally driven two-level pair.
lineshape
    Strain- and orientation-averaged fluorescence curves and maps.
signal_chain
    Virtual modulation, lock-in detection and slope extraction.
cli
    The ``nvlac`` command-line tool.
"""

__version__ = "0.1.0"
