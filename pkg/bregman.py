"""
Bregman Divergence Density-Ratio Losses

This module implements the divergence functions ψ, the parametric ratio
models h(x, θ), the per-round observable loss L̂_t and its gradient, and the
metrics that compare an estimated ratio with the true one.

Three divergences are supported, each paired with the hypothesis space on
which its loss is convex:

    LS  ψ(t) = (t − 1)² / 2              linear link       r̂(x) = xᵀθ
    LR  ψ(t) = t log t − (t + 1) log(t + 1)  exponential link  r̂(x) = exp(xᵀθ)
    KL  ψ(t) = t log t − t               exponential link  r̂(x) = exp(xᵀθ)

For every kind the population minimizer of the loss is r̂ = D_t / D₀.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import expit, xlogy

from core import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class DivergenceKind(str, Enum):
    LS = "LS"
    LR = "LR"
    KL = "KL"


class Link(str, Enum):
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


REQUIRED_LINK = {
    DivergenceKind.LS: Link.LINEAR,
    DivergenceKind.LR: Link.EXPONENTIAL,
    DivergenceKind.KL: Link.EXPONENTIAL,
}


class DivergenceSpec(BaseModel):
    """
    A divergence choice and its flattening exponent.

    Attributes:
        kind (DivergenceKind): LS, LR or KL
        flatten_exponent (float): γ_flat in (0, 1]; scales xᵀθ inside the LR
            loss. LS accepts only γ_flat in [1/2, 1], where its flattened loss
            stays convex.
    """

    model_config = ConfigDict(frozen=True)

    kind: DivergenceKind = Field(default=DivergenceKind.LR, description="Divergence kind")
    flatten_exponent: float = Field(default=1.0, description="Flattening exponent γ")

    @field_validator("flatten_exponent")
    @classmethod
    def _in_unit_interval(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"flatten_exponent must lie in (0, 1], got {value}")
        return value

    @model_validator(mode="after")
    def _ls_convexity(self) -> "DivergenceSpec":
        if self.kind is DivergenceKind.LS and self.flatten_exponent < 0.5:
            raise ValueError("LS flattening is convex only for flatten_exponent in [1/2, 1]")
        return self

    @property
    def link(self) -> Link:
        return REQUIRED_LINK[self.kind]

    def strong_convexity(self, beta: float) -> float:
        """
        Strong-convexity modulus μ of ψ on the working domain (0, β].

        Args:
            beta: The ratio range bound β = exp(S·R)

        Returns:
            float: 1 for LS, 1/(β+β²) for LR, 1/β for KL
        """
        if self.kind is DivergenceKind.LS:
            return 1.0
        if self.kind is DivergenceKind.LR:
            return 1.0 / (beta + beta * beta)
        return 1.0 / beta


@dataclass
class RatioModel:
    """
    A parametric density-ratio function r̂(x) = h(x, θ).

    Attributes:
        link (Link): exponential → exp(xᵀθ); linear → xᵀθ
        theta (np.ndarray): Parameter vector of length d
        radius (float): Norm bound S with ‖θ‖₂ ≤ S
    """

    link: Link
    theta: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=float)
        self.link = Link(self.link)
        norm = float(np.linalg.norm(self.theta))
        if norm > self.radius + 1e-8:
            raise DomainError(f"‖θ‖₂ = {norm:.6g} exceeds the radius S = {self.radius:.6g}")

    @classmethod
    def zeros(cls, link: Link, dim: int, radius: float) -> "RatioModel":
        return cls(link=link, theta=np.zeros(dim), radius=radius)


def _check_domain(spec: DivergenceSpec, t: np.ndarray) -> None:
    if spec.kind is not DivergenceKind.LS and np.any(t <= 0):
        raise DomainError(f"psi_{spec.kind.value} is defined only for t > 0")


def psi_value(spec: DivergenceSpec, t: ArrayLike) -> ArrayLike:
    """
    Evaluate the divergence function ψ.

    Args:
        spec: Divergence choice
        t: Argument (scalar or array); must be positive for LR and KL

    Returns:
        ψ(t) with the same shape as ``t``

    Raises:
        DomainError: If t ≤ 0 for LR or KL

    Example:
        >>> psi_value(DivergenceSpec(kind="LR"), 1.0)
        -1.3862943611198906
    """
    arr = np.asarray(t, dtype=float)
    _check_domain(spec, arr)
    if spec.kind is DivergenceKind.LS:
        out = 0.5 * (arr - 1.0) ** 2
    elif spec.kind is DivergenceKind.LR:
        out = xlogy(arr, arr) - xlogy(arr + 1.0, arr + 1.0)
    else:
        out = xlogy(arr, arr) - arr
    return out if np.ndim(t) else float(out)


def psi_deriv(spec: DivergenceSpec, t: ArrayLike) -> ArrayLike:
    """First derivative ∂ψ(t): t − 1 (LS), ln(t/(1+t)) (LR), ln t (KL)."""
    arr = np.asarray(t, dtype=float)
    _check_domain(spec, arr)
    if spec.kind is DivergenceKind.LS:
        out = arr - 1.0
    elif spec.kind is DivergenceKind.LR:
        out = np.log(arr) - np.log1p(arr)
    else:
        out = np.log(arr)
    return out if np.ndim(t) else float(out)


def psi_second(spec: DivergenceSpec, t: ArrayLike) -> ArrayLike:
    """Second derivative ∂²ψ(t): 1 (LS), 1/(t(1+t)) (LR), 1/t (KL)."""
    arr = np.asarray(t, dtype=float)
    _check_domain(spec, arr)
    if spec.kind is DivergenceKind.LS:
        out = np.ones_like(arr)
    elif spec.kind is DivergenceKind.LR:
        out = 1.0 / (arr * (1.0 + arr))
    else:
        out = 1.0 / arr
    return out if np.ndim(t) else float(out)


def bregman_div(spec: DivergenceSpec, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    Bregman divergence B_ψ(a‖b) = ψ(a) − ψ(b) − ∂ψ(b)(a − b).

    Returns:
        A nonnegative value, zero exactly when a = b

    Raises:
        DomainError: If a or b lies outside ψ's domain
    """
    if spec.kind is DivergenceKind.LS:
        _check_domain(spec, np.asarray(a, dtype=float))
        out = 0.5 * (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) ** 2
        return out if np.ndim(out) else float(out)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    out = psi_value(spec, a_arr) - psi_value(spec, b_arr) - psi_deriv(spec, b_arr) * (a_arr - b_arr)
    out = np.maximum(out, 0.0)
    return out if np.ndim(out) else float(out)


def ratio_eval(model: RatioModel, x: np.ndarray) -> ArrayLike:
    """
    Evaluate the ratio model at one point or at every row of a matrix.

    The linear link may return negative values; callers that use ratios as
    weights must floor them at zero.

    Args:
        model: The ratio model
        x: A vector of length d or a matrix of shape (n, d)

    Returns:
        r̂(x) as a float (vector input) or an array of shape (n,)
    """
    scores = np.asarray(x, dtype=float) @ model.theta
    if model.link is Link.EXPONENTIAL:
        scores = np.exp(scores)
    return scores if np.ndim(scores) else float(scores)


def _as_matrix(data: np.ndarray, what: str) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(data, dtype=float))
    if xs.shape[0] == 0 or xs.size == 0:
        raise DomainError(f"{what} sample list is empty")
    return xs


def _check_pairing(spec: DivergenceSpec, model: RatioModel) -> None:
    if model.link is not spec.link:
        raise DomainError(
            f"{spec.kind.value} requires the {spec.link.value} link, got {model.link.value}"
        )


def empirical_loss(
    spec: DivergenceSpec,
    model: RatioModel,
    offline: np.ndarray,
    online: np.ndarray,
) -> float:
    """
    Observable per-round loss L̂_t(θ) on the offline set and one online batch.

    LR:  ½·mean_{S₀} log(1 + e^{γxᵀθ}) + ½·mean_{S_t} log(1 + e^{−γxᵀθ})
    LS:  ½·mean_{S₀} (xᵀθ)² − mean_{S_t} xᵀθ + ½
    KL:  mean_{S₀} exp(xᵀθ) − mean_{S_t} xᵀθ

    The LR form carries a factor ½ relative to the generic Bregman loss
    (see ``functional_loss``).

    Args:
        spec: Divergence choice
        model: Ratio model whose link must match ``spec``
        offline: Offline features S₀, shape (N₀, d)
        online: Online features S_t, shape (N_t, d)

    Returns:
        float: The loss value

    Raises:
        DomainError: On empty inputs or a mismatched link/kind pairing
    """
    _check_pairing(spec, model)
    x0 = _as_matrix(offline, "offline")
    xt = _as_matrix(online, "online")
    z0 = x0 @ model.theta
    zt = xt @ model.theta
    if spec.kind is DivergenceKind.LR:
        g = spec.flatten_exponent
        return float(
            0.5 * np.mean(np.logaddexp(0.0, g * z0)) + 0.5 * np.mean(np.logaddexp(0.0, -g * zt))
        )
    if spec.kind is DivergenceKind.LS:
        return float(0.5 * np.mean(z0 * z0) - np.mean(zt) + 0.5)
    return float(np.mean(np.exp(z0)) - np.mean(zt))


def empirical_grad(
    spec: DivergenceSpec,
    model: RatioModel,
    offline: np.ndarray,
    online: np.ndarray,
) -> np.ndarray:
    """
    Exact gradient of ``empirical_loss`` with respect to θ.

    Returns:
        np.ndarray: Gradient vector of length d

    Raises:
        DomainError: On empty inputs or a mismatched link/kind pairing
    """
    _check_pairing(spec, model)
    x0 = _as_matrix(offline, "offline")
    xt = _as_matrix(online, "online")
    z0 = x0 @ model.theta
    zt = xt @ model.theta
    if spec.kind is DivergenceKind.LR:
        g = spec.flatten_exponent
        offline_term = expit(g * z0) @ x0 / x0.shape[0]
        online_term = expit(-g * zt) @ xt / xt.shape[0]
        return 0.5 * g * (offline_term - online_term)
    if spec.kind is DivergenceKind.LS:
        return z0 @ x0 / x0.shape[0] - xt.mean(axis=0)
    return np.exp(z0) @ x0 / x0.shape[0] - xt.mean(axis=0)


def functional_loss(
    spec: DivergenceSpec,
    r_offline: np.ndarray,
    r_online: np.ndarray,
) -> float:
    """
    Generic Bregman matching loss evaluated on ratio values.

        L(r) = mean_{S₀}[∂ψ(r)·r − ψ(r)] − mean_{S_t}[∂ψ(r)]

    Unlike ``empirical_loss`` this accepts arbitrary ratio functions (for
    instance the true ratio r*), which is what the Bregman identity
    E_{D₀}[B_ψ(r*‖r)] = L(r) − L(r*) needs.

    Args:
        spec: Divergence choice
        r_offline: Ratio values at offline points
        r_online: Ratio values at online points

    Returns:
        float: The loss value
    """
    r0 = np.asarray(r_offline, dtype=float)
    rt = np.asarray(r_online, dtype=float)
    if r0.size == 0 or rt.size == 0:
        raise DomainError("functional_loss needs nonempty offline and online values")
    offline_term = psi_deriv(spec, r0) * r0 - psi_value(spec, r0)
    online_term = psi_deriv(spec, rt)
    return float(np.mean(offline_term) - np.mean(online_term))


def expected_loss_mc(
    spec: DivergenceSpec,
    model: RatioModel,
    offline: np.ndarray,
    dt_sampler: Callable[[int, np.random.Generator], np.ndarray],
    n_mc: int,
    rng: np.random.Generator,
) -> float:
    """
    Monte Carlo stand-in for the expected loss L̃_t(θ).

    The online average of ``empirical_loss`` is replaced by an average over
    ``n_mc`` fresh draws from D_t. Diagnostic only; no learner calls this.

    Args:
        spec: Divergence choice
        model: Ratio model
        offline: Offline features S₀
        dt_sampler: Callable drawing ``n`` i.i.d. points from D_t with ``rng``
        n_mc: Number of Monte Carlo draws
        rng: Random stream for the sampler

    Raises:
        DomainError: If n_mc < 1
    """
    if n_mc < 1:
        raise DomainError(f"n_mc must be >= 1, got {n_mc}")
    draws = dt_sampler(n_mc, rng)
    return empirical_loss(spec, model, offline, draws)


def estimation_error(
    model: RatioModel,
    r_star: Callable[[np.ndarray], np.ndarray],
    offline: np.ndarray,
) -> float:
    """
    Mean absolute ratio error E_{x∼S₀}|r̂(x) − r*(x)|.

    Args:
        model: Estimated ratio model
        r_star: True ratio function evaluated row-wise on a matrix
        offline: Offline features S₀

    Returns:
        float: Nonnegative mean absolute deviation
    """
    x0 = _as_matrix(offline, "offline")
    return float(np.mean(np.abs(ratio_eval(model, x0) - np.asarray(r_star(x0), dtype=float))))
