"""The format game: a tiny RLVR environment scored by the composite reward.

Each context asks for one gold option letter. A completion is a fixed-length
token sequence; its rendered text earns 1 for the think/answer structure and
1 for the right letter inside the answer tags.
"""

from __future__ import annotations

import csv
import functools
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tsinject.rl.grpo import Completion, GroupBatch, GrpoConfig, grpo_gradient, grpo_objective
from tsinject.rl.policy import ToyPolicy
from tsinject.rl.rewards import DEFAULT_TAGS, composite_reward

DEFAULT_VOCAB = (*DEFAULT_TAGS, "A", "B", "C", "D", " ")


@dataclass(frozen=True)
class FormatGame:
    golds: tuple[str, ...] = ("A", "B", "C", "D")
    vocab: tuple[str, ...] = DEFAULT_VOCAB
    length: int = 6

    def __post_init__(self) -> None:
        if not 1 <= len(self.golds) <= 5:
            raise ValueError("the format game supports 1 to 5 contexts")
        missing = [g for g in self.golds if g not in self.vocab]
        if missing:
            raise ValueError(f"gold tokens {missing} are not in the vocabulary")
        if not set(DEFAULT_TAGS) <= set(self.vocab):
            raise ValueError("vocabulary must contain all four tags")

    def policy(self, shared_slices: bool = True, conditioning: str = "position") -> ToyPolicy:
        return ToyPolicy(self.vocab, len(self.golds), self.length, shared_slices, conditioning)

    def reward(self, text: str, context: int) -> int:
        return _cached_reward(text, self.golds[context])


@functools.lru_cache(maxsize=1 << 16)
def _cached_reward(text: str, gold: str) -> int:
    return composite_reward(text, gold).total


@dataclass
class TrainResult:
    theta: np.ndarray
    theta_ref: np.ndarray
    policy: ToyPolicy
    curve: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def final_reward(self) -> float:
        return self.curve[-1][1]

    def write_curve(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "mean_reward", "kl_to_ref"])
            for it, reward, kl in self.curve:
                writer.writerow([it, repr(reward), repr(kl)])


def expected_reward(env: FormatGame, policy: ToyPolicy, theta: np.ndarray) -> float:
    """Exact mean reward over contexts by enumerating every sequence.

    Only feasible for small vocab**length; used as an oracle in tests.
    """
    logp = policy.log_probs(theta)
    table = _reward_table(env)
    seqs = np.array(list(itertools.product(range(policy.vocab_size), repeat=policy.length)))
    total = 0.0
    states = policy.states(seqs)
    for c in range(len(env.golds)):
        seq_logp = logp[c, states, seqs].sum(axis=1)
        total += float(np.exp(seq_logp) @ table[:, c])
    return total / len(env.golds)


def estimate_reward(env: FormatGame, policy: ToyPolicy, theta: np.ndarray, n: int = 2000, seed: int = 0) -> float:
    """Monte-Carlo mean reward over contexts with ``n`` samples per context."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for c in range(len(env.golds)):
        ids = policy.sample(theta, c, n, rng)
        total += sum(env.reward(policy.render(row), c) for row in ids) / n
    return total / len(env.golds)


def _reward_table(env: FormatGame) -> np.ndarray:
    seqs = itertools.product(range(len(env.vocab)), repeat=env.length)
    return np.array(
        [[env.reward("".join(env.vocab[t] for t in s), c) for c in range(len(env.golds))] for s in seqs],
        dtype=float,
    )


def enumerate_optimal(env: FormatGame) -> dict[int, tuple[tuple[int, ...], int]]:
    """Best sequence and its reward for every context, by brute force."""
    best: dict[int, tuple[tuple[int, ...], int]] = {}
    for seq in itertools.product(range(len(env.vocab)), repeat=env.length):
        text = "".join(env.vocab[t] for t in seq)
        for c in range(len(env.golds)):
            r = env.reward(text, c)
            if c not in best or r > best[c][1]:
                best[c] = (seq, r)
    return best


def train_toy(
    env: FormatGame,
    config: GrpoConfig,
    iterations: int,
    seed: int,
    step_size: float = 10.0,
    inner_steps: int = 4,
    shared_slices: bool = True,
    conditioning: str = "position",
) -> TrainResult:
    """Run GRPO on the format game and record (iteration, mean reward, KL to reference).

    Each iteration samples ``config.group_size`` completions per context from
    the current policy (which becomes pi_old), normalizes rewards within each
    group and takes ``inner_steps`` gradient-ascent steps of size ``step_size``
    on the context-averaged objective. The reference policy is frozen at the
    initial (uniform) parameters.
    """
    policy = env.policy(shared_slices, conditioning)
    rng = np.random.default_rng(seed)
    theta = policy.zeros()
    theta_ref = theta.copy()
    result = TrainResult(theta, theta_ref, policy)
    n_ctx = len(env.golds)

    for it in range(iterations):
        theta_old = theta.copy()
        batches, rewards = [], []
        for c in range(n_ctx):
            ids = policy.sample(theta_old, c, config.group_size, rng)
            comps = [Completion(tuple(int(t) for t in row), policy.render(row), c) for row in ids]
            r = [env.reward(comp.rendered_text, c) for comp in comps]
            rewards.extend(r)
            batches.append(GroupBatch.from_rewards(comps, r, config.std_gamma))
        kl_ref = float(policy.kl_per_state(theta_old, theta_ref).mean())
        result.curve.append((it, float(np.mean(rewards)), kl_ref))

        for _ in range(inner_steps):
            grad = sum(grpo_gradient(b, theta, theta_old, theta_ref, config, policy) for b in batches)
            theta = theta + step_size * grad / n_ctx

    result.theta = theta
    return result


def mean_objective(batches, theta, theta_old, theta_ref, config, policy) -> float:
    return float(np.mean([grpo_objective(b, theta, theta_old, theta_ref, config, policy).value for b in batches]))
