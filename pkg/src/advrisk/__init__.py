"""Lower bounds on the minimal adversarial risk of multi-class classifiers.

The package solves a linear-programming relaxation of the adversarial risk
problem: couplings over small groups of differently-labeled points that fit
inside a perturbation ball contribute to an optimal transport objective whose
value bounds the risk of every classifier from below.  Three solvers are
provided: exhaustive enumeration of all feasible groups, a genetic search
over promising groups, and a dual-guided column generation scheme for the
quadratically penalized (soft-ball) variant.
"""

from advrisk.geometry import Ball, Metric, distance, enclosing_ball, frechet_mean, w2_penalty

__all__ = [
    "Ball",
    "Metric",
    "distance",
    "enclosing_ball",
    "frechet_mean",
    "w2_penalty",
]

__version__ = "0.1.0"
