"""Variational parameter bundles and skewness reparametrizations."""

from dataclasses import dataclass, field

import numpy as np

from .special import B

# Open bound for the cubed-alpha parametrization, ~4.565.
ALPHA_CUBED_BOUND = (1.0 - B**2) ** -1.5
# Relative safety margin used when clipping iterates into the open bound.
ALPHA_CUBED_MARGIN = 1e-6

LAMBDA = "lambda"
LAMBDA_CUBED = "lambda-cubed"
ALPHA_CUBED = "alpha-cubed"
PARAMETRIZATIONS = (LAMBDA, LAMBDA_CUBED, ALPHA_CUBED)


class DomainError(ValueError):
    """A parameter lies outside the admissible region."""


@dataclass(frozen=True)
class AuxQuantities:
    """Per-coordinate auxiliaries derived from the skewness vector."""

    delta: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray


def lambda_from_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    inner = 1.0 - (1.0 - B**2) * alpha**2
    if np.any(inner <= 0.0):
        bad = int(np.argmax(inner <= 0.0))
        raise DomainError(f"alpha component {bad} out of range: |alpha| must be < {(1 - B**2) ** -0.5:.6f}")
    return alpha / np.sqrt(inner)


def lambda_from_skew(kind, values):
    values = np.asarray(values, dtype=float)
    if kind == LAMBDA:
        return values.copy()
    if kind == LAMBDA_CUBED:
        return np.cbrt(values)
    if kind == ALPHA_CUBED:
        if np.any(np.abs(values) >= ALPHA_CUBED_BOUND):
            bad = int(np.argmax(np.abs(values) >= ALPHA_CUBED_BOUND))
            raise DomainError(
                f"alpha^3 component {bad} = {values[bad]:.6g} outside the open bound "
                f"(+/-{ALPHA_CUBED_BOUND:.6g})"
            )
        return lambda_from_alpha(np.cbrt(values))
    raise ValueError(f"unknown skew parametrization {kind!r}")


def skew_from_lambda(kind, lam):
    lam = np.asarray(lam, dtype=float)
    if kind == LAMBDA:
        return lam.copy()
    if kind == LAMBDA_CUBED:
        return lam**3
    if kind == ALPHA_CUBED:
        return (lam / np.sqrt(1.0 + (1.0 - B**2) * lam**2)) ** 3
    raise ValueError(f"unknown skew parametrization {kind!r}")


def clip_alpha_cubed(values):
    """Project cubed-alpha iterates into the open bound with a safety margin."""
    limit = ALPHA_CUBED_BOUND * (1.0 - ALPHA_CUBED_MARGIN)
    return np.clip(values, -limit, limit)


def derive_aux(kind, values):
    lam = lambda_from_skew(kind, values)
    delta = lam / np.sqrt(1.0 + lam**2)
    tau = np.sqrt(1.0 - B**2 * delta**2)
    kappa = 1.0 / np.sqrt(1.0 + (1.0 - B**2) * lam**2)
    alpha = lam * kappa
    return AuxQuantities(delta=delta, tau=tau, alpha=alpha, kappa=kappa)


@dataclass(frozen=True)
class SkewParam:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.kind not in PARAMETRIZATIONS:
            raise ValueError(f"unknown skew parametrization {self.kind!r}")

    def as_lambda(self):
        return lambda_from_skew(self.kind, self.values)

    def converted_to(self, kind):
        return SkewParam(kind, skew_from_lambda(kind, self.as_lambda()))


@dataclass(frozen=True)
class FactorForm:
    """Linear map C with Sigma = C C^T: either C = L or C = L U."""

    l: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        object.__setattr__(self, "l", l)
        if l.ndim != 2 or l.shape[0] != l.shape[1]:
            raise ValueError("L must be square")
        if not np.allclose(l, np.tril(l)):
            raise ValueError("L must be lower triangular")
        if np.any(np.diag(l) == 0.0):
            raise ValueError("L has a zero diagonal entry")
        if self.u is not None:
            u = np.asarray(self.u, dtype=float)
            object.__setattr__(self, "u", u)
            if u.shape != l.shape:
                raise ValueError("U must match L in shape")
            if not np.allclose(u, np.triu(u)):
                raise ValueError("U must be upper triangular")
            if not np.array_equal(np.diag(u), np.ones(u.shape[0])):
                raise ValueError("U must have an exactly unit diagonal")

    @property
    def is_lu(self):
        return self.u is not None

    @property
    def d(self):
        return self.l.shape[0]

    @property
    def c(self):
        return self.l if self.u is None else self.l @ self.u

    def log_abs_det(self):
        # U contributes nothing: its diagonal is exactly 1.
        return float(np.sum(np.log(np.abs(np.diag(self.l)))))


@dataclass(frozen=True)
class SkewParams:
    """Full parameter bundle (mu, factor of Sigma, skewness)."""

    mu: np.ndarray
    factor: FactorForm
    skew: SkewParam
    aux: AuxQuantities = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        d = self.factor.d
        if mu.shape != (d,):
            raise ValueError(f"mu must have shape ({d},)")
        if self.skew.values.shape != (d,):
            raise ValueError(f"skew must have shape ({d},)")
        object.__setattr__(self, "aux", derive_aux(self.skew.kind, self.skew.values))

    @property
    def d(self):
        return self.mu.shape[0]

    @property
    def lam(self):
        return self.skew.as_lambda()

    @property
    def c(self):
        return self.factor.c

    @property
    def sigma(self):
        c = self.c
        return c @ c.T

    def with_skew_values(self, values):
        return SkewParams(self.mu, self.factor, SkewParam(self.skew.kind, values))

    def to_dict(self):
        out = {
            "mu": self.mu.tolist(),
            "factor": {"form": "lu" if self.factor.is_lu else "cholesky", "L": self.factor.l.tolist()},
            "skew": {"parametrization": self.skew.kind, "values": self.skew.values.tolist()},
        }
        if self.factor.is_lu:
            out["factor"]["U"] = self.factor.u.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        fac = data["factor"]
        u = np.asarray(fac["U"]) if fac.get("form") == "lu" else None
        return cls(
            mu=np.asarray(data["mu"], dtype=float),
            factor=FactorForm(np.asarray(fac["L"], dtype=float), u),
            skew=SkewParam(data["skew"]["parametrization"], np.asarray(data["skew"]["values"], dtype=float)),
        )


def gaussian_params(mu, l, u=None, parametrization=LAMBDA):
    """Zero-skew bundle (the Gaussian member of the family)."""
    mu = np.asarray(mu, dtype=float)
    return SkewParams(mu, FactorForm(l, u), SkewParam(parametrization, np.zeros(mu.shape[0])))
