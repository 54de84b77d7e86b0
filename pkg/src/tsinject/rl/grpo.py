"""Group-relative policy optimization on explicit toy policies.

Sign convention: the objective is maximized. Anything logged as a loss is its
negation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from tsinject.rl.policy import ToyPolicy


class DomainMismatch(ValueError):
    """Policies or batches disagree on vocabulary, contexts or parameter shape."""


class KinkProximity(ValueError):
    """An importance ratio sits too close to a clip boundary for finite differences."""


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.1
    kl_beta: float = 0.001
    std_gamma: float = 1e-6
    max_len: int = 512

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be nonnegative")
        if self.std_gamma <= 0:
            raise ValueError("std_gamma must be positive")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")


@dataclass(frozen=True)
class Completion:
    token_ids: tuple[int, ...]
    rendered_text: str
    context_id: int


@dataclass(frozen=True)
class GroupBatch:
    """G completions for one context with their rewards and shared advantages."""

    completions: tuple[Completion, ...]
    rewards: np.ndarray
    advantages: np.ndarray
    group_mean: float
    group_std: float

    @property
    def context_id(self) -> int:
        return self.completions[0].context_id

    @classmethod
    def from_rewards(cls, completions: Sequence[Completion], rewards, gamma: float) -> "GroupBatch":
        rewards = np.asarray(rewards, dtype=float)
        if len(completions) != len(rewards):
            raise ValueError("one reward per completion")
        if len({c.context_id for c in completions}) != 1:
            raise DomainMismatch("a group must share one context")
        mean, std = group_stats(rewards, gamma)
        return cls(tuple(completions), rewards, group_advantages(rewards, gamma), mean, std)


def group_stats(rewards, gamma: float) -> tuple[float, float]:
    """Group mean and the stabilized population standard deviation."""
    rewards = np.asarray(rewards, dtype=float)
    mean = float(rewards.mean())
    return mean, float(np.sqrt(np.mean((rewards - mean) ** 2) + gamma))


def group_advantages(rewards, gamma: float) -> np.ndarray:
    """(r_i - mean) / sqrt(population variance + gamma) for one group."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 1 or rewards.size < 2:
        raise ValueError("need a group of at least two rewards")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if np.all(rewards == rewards[0]):
        # the centred rewards are exactly zero; rounding in the mean would leak through 1/sqrt(gamma)
        return np.zeros_like(rewards)
    mean, std = group_stats(rewards, gamma)
    return (rewards - mean) / std


@dataclass
class ObjectiveResult:
    value: float
    surrogate: float
    kl: float
    ratios: np.ndarray
    clipped: np.ndarray = field(repr=False)

    @property
    def loss(self) -> float:
        return -self.value


def _token_table(batch: GroupBatch, policy: ToyPolicy, config: GrpoConfig):
    """Flatten a batch into (context, state, token, weight, advantage) arrays."""
    g = len(batch.completions)
    limit = min(config.max_len, policy.length)
    ctx, state, tok, weight, adv = [], [], [], [], []
    for comp, a in zip(batch.completions, batch.advantages):
        n = len(comp.token_ids)
        if not 1 <= n <= limit:
            raise DomainMismatch(f"completion length {n} outside [1, {limit}]")
        if not 0 <= comp.context_id < policy.n_contexts:
            raise DomainMismatch(f"unknown context {comp.context_id}")
        ids = np.asarray(comp.token_ids)
        if ids.min() < 0 or ids.max() >= policy.vocab_size:
            raise DomainMismatch("token id outside the policy vocabulary")
        ctx.append(np.full(n, comp.context_id))
        state.append(policy.states(ids))
        tok.append(ids)
        weight.append(np.full(n, 1.0 / (g * n)))
        adv.append(np.full(n, float(a)))
    return tuple(np.concatenate(x) for x in (ctx, state, tok, weight, adv))


def _check_params(policy: ToyPolicy, *thetas: np.ndarray) -> None:
    for theta in thetas:
        if np.shape(theta) != (policy.n_params,):
            raise DomainMismatch(f"parameter vector of shape {np.shape(theta)}, policy needs ({policy.n_params},)")


def grpo_objective(
    batch: GroupBatch,
    theta: np.ndarray,
    theta_old: np.ndarray,
    theta_ref: np.ndarray,
    config: GrpoConfig,
    policy: ToyPolicy,
) -> ObjectiveResult:
    """Clipped group-relative surrogate minus beta times the exact KL to the reference.

    The KL term is the closed-form categorical divergence at every visited
    state, weighted exactly like the surrogate tokens (1/G per completion,
    1/|z_i| per token).
    """
    _check_params(policy, theta, theta_old, theta_ref)
    ctx, state, tok, w, adv = _token_table(batch, policy, config)
    logp = policy.log_probs(theta)
    logp_old = policy.log_probs(theta_old)
    ratio = np.exp(logp[ctx, state, tok] - logp_old[ctx, state, tok])
    eps = config.clip_epsilon
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
    surrogate = float(np.sum(w * np.minimum(unclipped, clipped)))
    kl_states = policy.kl_per_state(theta, theta_ref)
    kl = float(np.sum(w * kl_states[ctx, state]))
    return ObjectiveResult(
        value=surrogate - config.kl_beta * kl,
        surrogate=surrogate,
        kl=kl,
        ratios=ratio,
        clipped=clipped < unclipped,
    )


def unclipped_objective(batch, theta, theta_old, theta_ref, config, policy) -> float:
    """Plain importance-weighted surrogate minus the KL penalty (no clipping)."""
    ctx, state, tok, w, adv = _token_table(batch, policy, config)
    logp = policy.log_probs(theta)
    logp_old = policy.log_probs(theta_old)
    ratio = np.exp(logp[ctx, state, tok] - logp_old[ctx, state, tok])
    kl = float(np.sum(w * policy.kl_per_state(theta, theta_ref)[ctx, state]))
    return float(np.sum(w * ratio * adv)) - config.kl_beta * kl


def grpo_gradient(
    batch: GroupBatch,
    theta: np.ndarray,
    theta_old: np.ndarray,
    theta_ref: np.ndarray,
    config: GrpoConfig,
    policy: ToyPolicy,
) -> np.ndarray:
    """Analytic gradient of :func:`grpo_objective` with respect to ``theta``."""
    _check_params(policy, theta, theta_old, theta_ref)
    ctx, state, tok, w, adv = _token_table(batch, policy, config)
    logp = policy.log_probs(theta)
    p = np.exp(logp)
    logp_old = policy.log_probs(theta_old)
    ratio = np.exp(logp[ctx, state, tok] - logp_old[ctx, state, tok])
    eps = config.clip_epsilon
    # the unclipped branch carries the gradient; the clipped one is constant in theta
    active = np.where(adv > 0, ratio <= 1 + eps, ratio >= 1 - eps) & (adv != 0)
    coef = w * adv * ratio * active

    grad_logits = np.zeros_like(p)
    # d rho / d logits = rho * (onehot(token) - p)
    np.add.at(grad_logits, (ctx, state), -coef[:, None] * p[ctx, state])
    np.add.at(grad_logits, (ctx, state, tok), coef)

    if config.kl_beta:
        logq = policy.log_probs(theta_ref)
        kl_states = (p * (logp - logq)).sum(axis=-1)
        dkl = p * (logp - logq - kl_states[..., None])
        np.add.at(grad_logits, (ctx, state), -config.kl_beta * w[:, None] * dkl[ctx, state])
    return policy.logit_grad_to_params(grad_logits)


GradFn = Callable[[GroupBatch, np.ndarray, np.ndarray, np.ndarray, GrpoConfig, ToyPolicy], np.ndarray]


def grad_check(
    batch: GroupBatch,
    theta: np.ndarray,
    theta_old: np.ndarray,
    theta_ref: np.ndarray,
    config: GrpoConfig,
    policy: ToyPolicy,
    h: float = 1e-5,
    grad_fn: GradFn = grpo_gradient,
) -> float:
    """Max coordinate-wise relative error of ``grad_fn`` against central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-6)``. The
    floor covers exactly-zero coordinates (unvisited states), where the
    central difference returns roundoff of order 1e-12 rather than zero.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    eps = config.clip_epsilon
    ratios = grpo_objective(batch, theta, theta_old, theta_ref, config, policy).ratios
    margin = np.minimum(np.abs(ratios - (1 - eps)), np.abs(ratios - (1 + eps)))
    if margin.min() <= 10 * h:
        raise KinkProximity(f"ratio within {margin.min():.3g} of a clip boundary (need > {10 * h:.3g})")

    analytic = grad_fn(batch, theta, theta_old, theta_ref, config, policy)
    numeric = np.empty_like(analytic)
    theta = np.asarray(theta, dtype=float)
    for j in range(theta.size):
        bump = np.zeros_like(theta)
        bump[j] = h
        up = grpo_objective(batch, theta + bump, theta_old, theta_ref, config, policy).value
        down = grpo_objective(batch, theta - bump, theta_old, theta_ref, config, policy).value
        numeric[j] = (up - down) / (2 * h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / scale))
