"""Matter-wave splitting with time-dependent optical lattices.

Band structure, Landau-Zener event model, split-step wave solver, scenario
files and analysis tools for Bloch-oscillation beam splitters and Bragg
mirrors.
"""
__version__ = "0.1.0"
