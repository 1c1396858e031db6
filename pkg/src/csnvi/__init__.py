"""Variational inference with a skew-normal transport family.

The family is theta = mu + C z with z a vector of independent
standardized univariate skew normals; C is either a Cholesky factor or
an LU product with unit-diagonal U.
"""

from .params import (
    ALPHA_CUBED,
    ALPHA_CUBED_BOUND,
    LAMBDA,
    LAMBDA_CUBED,
    DomainError,
    FactorForm,
    SkewParam,
    SkewParams,
    gaussian_params,
)

__all__ = [
    "ALPHA_CUBED",
    "ALPHA_CUBED_BOUND",
    "LAMBDA",
    "LAMBDA_CUBED",
    "DomainError",
    "FactorForm",
    "SkewParam",
    "SkewParams",
    "gaussian_params",
]

__version__ = "0.1.0"
