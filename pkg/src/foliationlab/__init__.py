"""foliationlab: certified perturbations of Holder foliations of the square.

Builds generators f(x, y) of foliations of [0,1]^2 by graphs of x -> f(x, y),
pushes them through a smoothing + dyadic-perturbation pipeline whose every
free constant is certified against closed-form feasibility bounds, and
measures the resulting strip-ratio disintegration: extreme conditional
ratios, ratio-sequence lock-in, and Dirac-like concentration of conditional
mass along leaves.
"""

from .core import (CubicWarpFoliation, Foliation, GridSampledFoliation,
                   HolderClass, IdentityFoliation, ShearFoliation, builtin,
                   eval_dx, eval_foliation, invert_y, parse_manifest)
from .constructor import Certificate, construct_in_B
from .disintegration import (ACReport, AtomReport, RatioSequence,
                             ResidualStep, ac_report, atom_locate,
                             membership_A, membership_B, ratio_sequence,
                             residual_iterate, strip_measure,
                             strip_measure_in, strip_table)
from .errors import (CorruptFoliationError, DomainError, FoliationLabError,
                     ParameterError, PrecisionError)
from .metric import (BiHolderCertificate, NormEstimate, SampleScheme,
                     c0_distance, cauchy_probe, certify_bi_holder, d_alpha,
                     holder_seminorm)
from .numerics import EvalSettings
from .perturbation import (BumpProfile, DyadicPerturbedFoliation, IntervalQ,
                           PerturbationParams, bump_a, bump_a_tilde,
                           choose_deltas, choose_n, dyadic_perturb)
from .smoothing import (InterpolatedFoliation, InterpolationParams,
                        LipschitzEstimates, MollifiedFoliation, MollifyParams,
                        choose_epsilon, choose_r, estimate_lipschitz,
                        interpolate_identity, mollifier, mollify,
                        reflect_extend)

__version__ = "0.1.0"
