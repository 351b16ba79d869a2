"""Covariate samplers: standard Gaussian and 1-D generalized Gaussian designs."""

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, UnsupportedDesignError
from .numerics import sample_gen_gaussian_1d

GAUSSIAN = "gaussian"
GENERALIZED = "generalized"


@dataclass(frozen=True)
class DesignSpec:
    """Covariate law: gaussian in any dimension, or generalized(gamma) at p=1.

    A generalized design with gamma != 2 is only defined through its 1-D
    projections, so dimensions above 1 are rejected for it.
    """

    kind: str
    dim: int
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, GENERALIZED):
            raise UnsupportedDesignError(f"unknown design kind {self.kind!r}")
        if self.dim < 1:
            raise PreconditionError("dim must be a positive integer")
        if self.kind == GENERALIZED:
            if not self.gamma > 0:
                raise PreconditionError("gamma must be positive")
            if self.gamma != 2.0 and self.dim != 1:
                raise UnsupportedDesignError(
                    "generalized design with gamma != 2 supports dim = 1 only"
                )


def gaussian_design(dim):
    return DesignSpec(GAUSSIAN, dim)


def generalized_design(gamma, dim=1):
    return DesignSpec(GENERALIZED, dim, gamma)


def sample_design(spec, n, rng):
    """Draw an (n, p) covariate matrix with i.i.d. rows from the design."""
    if n < 1:
        raise PreconditionError("n must be positive")
    if spec.kind == GAUSSIAN:
        return rng.normal(size=(n, spec.dim))
    if spec.gamma != 2.0 and spec.dim != 1:
        raise UnsupportedDesignError(
            "generalized design with gamma != 2 supports dim = 1 only"
        )
    cols = [
        sample_gen_gaussian_1d(spec.gamma, rng, size=n) for _ in range(spec.dim)
    ]
    return np.column_stack(cols)
