"""gromolab: growth invariants of isometry semigroups on hyperbolic models.

Library layout:

- :mod:`gromolab.models`    model spaces, isometries, Gromov products
- :mod:`gromolab.orbits`    orbit enumeration, separated nets, stores
- :mod:`gromolab.betaring`  exact arithmetic in Z[beta], Pisot/Salem tools
- :mod:`gromolab.schottky`  contraction and ping-pong certificates
- :mod:`gromolab.growth`    critical exponent / entropy estimators
- :mod:`gromolab.limitsets` boundary samples, box dimension, measures
- :mod:`gromolab.presets`   named experiment configurations
- :mod:`gromolab.cli`       command line entry point
"""

from .models import (
    GromolabError, InvalidPoint, InvalidIsometry, ModelMismatch,
    INFINITY, Point, ModelSpace, Isometry, AffineTag,
    distance, gromov_product, apply_isometry, compose, inverse,
    affine_to_isometry, estimate_delta_hyp, default_space,
)

__version__ = "0.1.0"
