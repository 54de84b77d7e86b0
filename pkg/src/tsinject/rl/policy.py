"""Explicit categorical policies over short token sequences.

A policy emits fixed-length completions. The next-token distribution for
context ``c`` depends on the prefix only through a finite *state*, tracked by
a deterministic automaton ``state' = T[state, token]``. Three summaries are
available:

``position``
    the step index.
``previous``
    the previous token, with a begin-of-sequence state at step 0.
``phase``
    a structural parse of the prefix against the think/answer layout
    (before think, inside think, between blocks, inside answer, after the
    answer, or broken). Any deviation from the layout lands in a single
    absorbing ``broken`` state.

The logits at a state are the sum of a parameter slice private to
``(c, state)`` and, optionally, a slice shared by every context at that
state. Everything is closed form, so objective gradients and KL terms are
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tsinject.rl.rewards import DEFAULT_TAGS

CONDITIONINGS = ("position", "previous", "phase")

# phases of the think/answer layout
START, THINK_OPEN, THINK_BODY, THINK_DONE, ANSWER_OPEN, ANSWER_BODY, DONE, BROKEN = range(8)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def phase_table(vocab: tuple[str, ...], tags: tuple[str, str, str, str] = DEFAULT_TAGS) -> np.ndarray:
    """Transition table of the layout parser, shape (8, len(vocab))."""
    think_open, think_close, answer_open, answer_close = tags
    table = np.full((8, len(vocab)), BROKEN, dtype=np.int64)
    for v, tok in enumerate(vocab):
        blank = tok.strip() == ""
        if tok == think_open:
            table[START, v] = THINK_OPEN
        elif tok == think_close:
            table[[THINK_OPEN, THINK_BODY], v] = THINK_DONE
        elif tok == answer_open:
            table[THINK_DONE, v] = ANSWER_OPEN
        elif tok == answer_close:
            table[[ANSWER_OPEN, ANSWER_BODY], v] = DONE
        else:
            table[[THINK_OPEN, THINK_BODY], v] = THINK_BODY
            table[[ANSWER_OPEN, ANSWER_BODY], v] = ANSWER_BODY
            if blank:
                for p in (START, THINK_DONE, DONE):
                    table[p, v] = p
    return table


@dataclass(frozen=True)
class ToyPolicy:
    vocab: tuple[str, ...]
    n_contexts: int
    length: int
    shared_slices: bool = True
    conditioning: str = "position"
    tags: tuple[str, str, str, str] = DEFAULT_TAGS
    _table: np.ndarray = field(init=False, repr=False, compare=False)
    _start: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.vocab) < 2 or len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab needs at least two distinct tokens")
        if self.n_contexts < 1 or self.length < 1:
            raise ValueError("n_contexts and length must be positive")
        v = len(self.vocab)
        if self.conditioning == "position":
            row = np.minimum(np.arange(self.length) + 1, self.length - 1)
            table, start = np.repeat(row[:, None], v, axis=1), 0
        elif self.conditioning == "previous":
            table, start = np.tile(np.arange(v), (v + 1, 1)), v
        elif self.conditioning == "phase":
            if not set(self.tags) <= set(self.vocab):
                raise ValueError("phase conditioning needs all four tags in the vocabulary")
            table, start = phase_table(self.vocab, self.tags), START
        else:
            raise ValueError(f"conditioning must be one of {CONDITIONINGS}, got {self.conditioning!r}")
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)
        object.__setattr__(self, "_start", start)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def n_states(self) -> int:
        return self._table.shape[0]

    @property
    def n_params(self) -> int:
        blocks = self.n_contexts + (1 if self.shared_slices else 0)
        return blocks * self.n_states * self.vocab_size

    def zeros(self) -> np.ndarray:
        """Parameters of the uniform policy."""
        return np.zeros(self.n_params)

    def states(self, token_ids: np.ndarray) -> np.ndarray:
        """State in force before every step of each sequence (same shape as ``token_ids``)."""
        token_ids = np.asarray(token_ids)
        out = np.empty(token_ids.shape, dtype=np.int64)
        state = np.full(token_ids.shape[:-1], self._start, dtype=np.int64)
        for k in range(token_ids.shape[-1]):
            out[..., k] = state
            state = self._table[state, token_ids[..., k]]
        return out

    def logits(self, theta: np.ndarray) -> np.ndarray:
        """Per-state logits, shape (contexts, states, vocab)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        shape = (self.n_contexts, self.n_states, self.vocab_size)
        split = self.n_contexts * self.n_states * self.vocab_size
        private = theta[:split].reshape(shape)
        if not self.shared_slices:
            return private
        return private + theta[split:].reshape(shape[1:])[None, :, :]

    def log_probs(self, theta: np.ndarray) -> np.ndarray:
        return log_softmax(self.logits(theta))

    def probs(self, theta: np.ndarray) -> np.ndarray:
        return np.exp(self.log_probs(theta))

    def logit_grad_to_params(self, grad_logits: np.ndarray) -> np.ndarray:
        """Chain rule from d/d(logits) to d/d(theta)."""
        private = grad_logits.reshape(-1)
        if not self.shared_slices:
            return private.copy()
        return np.concatenate([private, grad_logits.sum(axis=0).reshape(-1)])

    def sample(self, theta: np.ndarray, context: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` token-id sequences for one context, shape (n, length)."""
        cdf = np.cumsum(self.probs(theta)[context], axis=-1)
        cdf[:, -1] = 1.0
        u = rng.random((n, self.length))
        out = np.empty((n, self.length), dtype=np.int64)
        state = np.full(n, self._start, dtype=np.int64)
        for k in range(self.length):
            out[:, k] = (u[:, k, None] < cdf[state]).argmax(axis=-1)
            state = self._table[state, out[:, k]]
        return out

    def sequence_log_prob(self, theta: np.ndarray, context: int, token_ids: np.ndarray) -> np.ndarray:
        token_ids = np.asarray(token_ids)
        logp = self.log_probs(theta)[context]
        return logp[self.states(token_ids), token_ids].sum(axis=-1)

    def render(self, token_ids) -> str:
        return "".join(self.vocab[int(t)] for t in token_ids)

    def kl_per_state(self, theta: np.ndarray, theta_ref: np.ndarray) -> np.ndarray:
        """Exact KL(pi_theta || pi_ref) at every state, shape (contexts, states)."""
        logp = self.log_probs(theta)
        logq = self.log_probs(theta_ref)
        return (np.exp(logp) * (logp - logq)).sum(axis=-1)
