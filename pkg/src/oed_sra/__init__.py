"""Sequential Bayesian experimental design for structural reliability analysis.

Failure probabilities of hierarchical models with GP surrogates and unknown
parameters are estimated by pruned importance sampling combined with the
unscented transform over epistemic coordinates (UT-MCIS); experiments are
chosen myopically to reduce the residual epistemic uncertainty.
"""

from .probspace import DomainError, Gumbel, LogNormal, Marginal, Normal, RandomVector
from .unscented import SigmaPointSet, merwe_sigma_points, propagate
from .gp import GpSurrogate, Kernel, make_gp, matern52
from .model_graph import (
    Decision,
    Deterministic,
    Experiment,
    ModelGraph,
    NormalParam,
    SurrogateNode,
)

__version__ = "0.1.0"
