"""Finite, exactly checkable models of locality and common causes.

Submodules:

``prob_core``
    finite probability spaces, events, partitions, screening-off checks
``spacetime_sel``
    lattice spacetimes, world ensembles and stochastic Einstein locality
``common_cause``
    weak and strong common-cause principles and the two-copy extension
``bell_lab``
    hidden-variable models, CHSH, PI/OI and the many-cause construction
``causet_growth``
    causal sets and classical sequential growth dynamics
``cli``
    config-driven runner producing reproducible manifests
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .prob_core import (  # noqa: F401
    CheckReport,
    Event,
    Partition,
    ProbabilitySpace,
    cond_prob,
    correlation,
    prob,
    reichenbach_check,
    screens_off,
)
