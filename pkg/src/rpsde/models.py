"""SDE problem definitions and the built-in benchmark models.

All problems have the semi-linear form

    dX = (-A X + f(t, X)) dt + g(t, X) dW,

with A symmetric positive definite, f/g continuous and time-periodic with
period tau, and the drift nonlinearity one-sided Lipschitz with constant
L_f strictly below the smallest eigenvalue of A (dissipativity).

Drift/diffusion callables must be vectorized: they accept state arrays of
shape (..., d) and return (..., d) for the drift, (..., d, d) for the
Jacobian and (..., d, m) for the diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SdeProblem",
    "ModelCatalogEntry",
    "DissipativityReport",
    "ParameterError",
    "build_cubic_model",
    "build_additive_model",
    "build_linear_model",
    "catalog_entry",
    "check_dissipativity",
    "MODEL_NAMES",
]

MODEL_NAMES = ("cubic_multiplicative", "additive_sine", "linear_ou")


class ParameterError(ValueError):
    """A model parameter violates one of the standing assumptions."""


@dataclass(frozen=True)
class SdeProblem:
    """One dissipative semi-linear SDE instance.

    Immutable after construction; drift/diffusion must be pure functions so
    problems can be shared freely across concurrent workers.
    """

    state_dim: int
    noise_dim: int
    linear_matrix: np.ndarray
    lambda_min: float
    drift: Callable[[float, np.ndarray], np.ndarray]
    drift_jacobian: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    period: float
    one_sided_lipschitz: float
    moment_exponent: float
    growth_exponent: float

    def __post_init__(self):
        a = np.asarray(self.linear_matrix, dtype=float)
        if a.shape != (self.state_dim, self.state_dim):
            raise ParameterError(
                f"linear_matrix must be {self.state_dim}x{self.state_dim}, got {a.shape}"
            )
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
            raise ParameterError("linear_matrix must be symmetric")
        eigmin = float(np.linalg.eigvalsh(a).min())
        if eigmin <= 0.0:
            raise ParameterError(f"linear_matrix must be positive definite (min eig {eigmin})")
        if abs(eigmin - self.lambda_min) > 1e-9 * max(1.0, abs(eigmin)):
            raise ParameterError(
                f"lambda_min {self.lambda_min} does not match smallest eigenvalue {eigmin}"
            )
        if not 0.0 < self.one_sided_lipschitz < self.lambda_min:
            raise ParameterError(
                f"need 0 < L_f < lambda: L_f={self.one_sided_lipschitz}, lambda={self.lambda_min}"
            )
        if self.period <= 0.0:
            raise ParameterError("period must be positive")
        if self.growth_exponent < 1.0:
            raise ParameterError("growth exponent must be >= 1")
        if self.moment_exponent <= (self.state_dim + 4) * self.growth_exponent:
            raise ParameterError(
                "moment exponent must exceed (d+4)*gamma: "
                f"p*={self.moment_exponent}, bound={(self.state_dim + 4) * self.growth_exponent}"
            )
        object.__setattr__(self, "linear_matrix", a)
        a.setflags(write=False)


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    problem: SdeProblem
    parameters: dict
    has_exact_step: bool = False

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ParameterError(f"unknown model name {self.name!r}")


@dataclass(frozen=True)
class DissipativityReport:
    sample_count: int
    box_radius: float
    max_ratio: float
    l_f: float
    passed: bool


def build_cubic_model(
    lam: float, a: float, b: float, c: float, dcoef: float, pstar: float
) -> SdeProblem:
    """Scalar benchmark with cubic drift and quadratic multiplicative noise.

    dX = (-lam X - a X^3 (1+sin(pi t))) dt
         + (b + c X + dcoef X^2 (1+sin(pi t))) dW,   period 2.
    """
    if lam <= 0.0:
        raise ParameterError(f"need lam > 0, got {lam}")
    if a <= 0.0:
        raise ParameterError(f"need a > 0, got {a}")
    if 12.0 * dcoef**2 * (pstar - 1.0) > a:
        raise ParameterError(
            f"need 12*d^2*(p*-1) <= a: 12*{dcoef}^2*{pstar - 1} = "
            f"{12.0 * dcoef**2 * (pstar - 1.0)} > {a}"
        )
    l_f = 3.0 * c**2 * (pstar - 1.0)
    if l_f >= lam:
        raise ParameterError(
            f"need 3*c^2*(p*-1) < lam: {l_f} >= {lam}"
        )

    def drift(t, x):
        return -a * x**3 * (1.0 + math.sin(math.pi * t))

    def drift_jacobian(t, x):
        return (-3.0 * a * x**2 * (1.0 + math.sin(math.pi * t)))[..., None]

    def diffusion(t, x):
        return (b + c * x + dcoef * x**2 * (1.0 + math.sin(math.pi * t)))[..., None]

    return SdeProblem(
        state_dim=1,
        noise_dim=1,
        linear_matrix=np.array([[lam]]),
        lambda_min=lam,
        drift=drift,
        drift_jacobian=drift_jacobian,
        diffusion=diffusion,
        period=2.0,
        one_sided_lipschitz=l_f,
        moment_exponent=pstar,
        growth_exponent=3.0,
    )


# f is state-independent here, so any positive L_f below lambda works; a tiny
# nominal value keeps the contraction formulas well defined.
_ADDITIVE_LF = 1e-3


def build_additive_model() -> SdeProblem:
    """Scalar benchmark with additive noise: dX = -10 pi X dt + sin(2 pi t) dt + 0.05 dW."""
    lam = 10.0 * math.pi

    def drift(t, x):
        return np.broadcast_to(math.sin(2.0 * math.pi * t), x.shape).copy()

    def drift_jacobian(t, x):
        return np.zeros(x.shape + (1,))

    def diffusion(t, x):
        return np.full(x.shape + (1,), 0.05)

    return SdeProblem(
        state_dim=1,
        noise_dim=1,
        linear_matrix=np.array([[lam]]),
        lambda_min=lam,
        drift=drift,
        drift_jacobian=drift_jacobian,
        diffusion=diffusion,
        period=1.0,
        one_sided_lipschitz=_ADDITIVE_LF,
        moment_exponent=21.0,
        growth_exponent=1.0,
    )


def build_linear_model(lam: float, sigma: float) -> SdeProblem:
    """Ornstein-Uhlenbeck oracle: dX = -lam X dt + sigma dW, zero drift nonlinearity.

    The implicit theta step for this problem has the closed form implemented
    in integrator.exact_linear_step, which is used to validate the Newton
    solver.
    """
    if lam <= 0.0:
        raise ParameterError(f"need lam > 0, got {lam}")
    if sigma < 0.0:
        raise ParameterError(f"need sigma >= 0, got {sigma}")

    def drift(t, x):
        return np.zeros_like(x)

    def drift_jacobian(t, x):
        return np.zeros(x.shape + (1,))

    def diffusion(t, x):
        return np.full(x.shape + (1,), sigma)

    return SdeProblem(
        state_dim=1,
        noise_dim=1,
        linear_matrix=np.array([[lam]]),
        lambda_min=lam,
        drift=drift,
        drift_jacobian=drift_jacobian,
        diffusion=diffusion,
        period=1.0,
        one_sided_lipschitz=min(1e-3, 0.5 * lam),
        moment_exponent=21.0,
        growth_exponent=1.0,
    )


def catalog_entry(name: str, **params) -> ModelCatalogEntry:
    """Look up a built-in model by name with optional parameter overrides."""
    if name == "cubic_multiplicative":
        defaults = dict(lam=5.0 * math.pi, a=3.0, b=1.5, c=0.5, dcoef=0.1, pstar=21.0)
        defaults.update(params)
        return ModelCatalogEntry(name, build_cubic_model(**defaults), defaults, False)
    if name == "additive_sine":
        if params:
            raise ParameterError("additive_sine takes no parameters")
        return ModelCatalogEntry(name, build_additive_model(), {}, False)
    if name == "linear_ou":
        defaults = dict(lam=1.0, sigma=0.3)
        defaults.update(params)
        return ModelCatalogEntry(name, build_linear_model(**defaults), defaults, True)
    raise ParameterError(f"unknown model name {name!r}; choose from {MODEL_NAMES}")


def check_dissipativity(
    problem: SdeProblem,
    sample_count: int,
    box_radius: float,
    rng_seed: int,
    tolerance_rel: float = 1e-9,
) -> DissipativityReport:
    """Sampled check of the one-sided Lipschitz / monotonicity condition.

    Samples (t, x, y) uniformly in [0, tau) x [-r, r]^d and reports the
    maximum of

        (<x-y, f(t,x)-f(t,y)> + (p*-1) |g(t,x)-g(t,y)|^2) / |x-y|^2

    which dissipativity requires to stay below L_f.
    """
    if sample_count < 1:
        raise ParameterError("sample_count must be >= 1")
    if box_radius <= 0.0:
        raise ParameterError("box_radius must be positive")
    rng = np.random.default_rng(rng_seed)
    d = problem.state_dim
    pstar = problem.moment_exponent
    max_ratio = 0.0
    batch = 4096
    remaining = sample_count
    while remaining > 0:
        n = min(batch, remaining)
        remaining -= n
        ts = rng.uniform(0.0, problem.period, size=n)
        xs = rng.uniform(-box_radius, box_radius, size=(n, d))
        ys = rng.uniform(-box_radius, box_radius, size=(n, d))
        for t, x, y in zip(ts, xs, ys):
            diff = x - y
            nrm2 = float(diff @ diff)
            if nrm2 == 0.0:
                continue
            fdiff = problem.drift(t, x) - problem.drift(t, y)
            gdiff = problem.diffusion(t, x) - problem.diffusion(t, y)
            num = float(diff @ fdiff) + (pstar - 1.0) * float(np.sum(gdiff**2))
            max_ratio = max(max_ratio, num / nrm2)
    l_f = problem.one_sided_lipschitz
    return DissipativityReport(
        sample_count=sample_count,
        box_radius=box_radius,
        max_ratio=max_ratio,
        l_f=l_f,
        passed=max_ratio <= l_f * (1.0 + tolerance_rel),
    )
