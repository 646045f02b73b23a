"""Design and analysis toolkit for dispersion-engineered parametric down-conversion sources.

Modules:
    dispersion: refractive indices, propagation constants and group delays.
    phasematch: phase mismatch, poling period and group-velocity matching.
    jsa: joint spectral amplitudes, marginals, bandwidths and correlation times.
    tagproc: coincidence counting and pair-rate analysis of detector time tags.
    cli: the ``spdc-forge`` command.
"""

__version__ = "0.1.0"
