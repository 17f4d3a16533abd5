"""Skip-gram-with-negative-sampling pretraining for indicator tokens.

Each of the three indicator features gets its own corpus: one chronological
sequence of weekly tokens per user. Tokens that co-occur inside a small
window across a user's weeks end up with nearby vectors, which warm-starts
the classifier's embedding tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .nn import sigmoid


class EmptyCorpus(ValueError):
    """No center/context pair can be formed from the corpus."""


@dataclass
class TokenCorpus:
    """Per-user chronological token sequences for one feature."""

    sequences: list[list[int]] = field(default_factory=list)

    def pairs(self, window: int) -> list[tuple[int, int]]:
        out = []
        for seq in self.sequences:
            for i, center in enumerate(seq):
                for w in range(-window, window + 1):
                    j = i + w
                    if w != 0 and 0 <= j < len(seq):
                        out.append((center, seq[j]))
        return out


@dataclass
class EmbeddingTable:
    weights: np.ndarray  # (vocab, dim)

    @property
    def vocab(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def build_corpus(samples: Sequence) -> tuple[TokenCorpus, TokenCorpus, TokenCorpus]:
    """Split samples into three corpora, one per indicator feature.

    Samples need ``user_id``, ``week_start`` and ``deep_tokens`` attributes.
    Sequences are per user in week order and never concatenated across users.
    """
    by_user: dict[str, list] = {}
    for s in samples:
        by_user.setdefault(s.user_id, []).append(s)
    corpora = (TokenCorpus(), TokenCorpus(), TokenCorpus())
    for user_id in sorted(by_user):
        weeks = sorted(by_user[user_id], key=lambda s: s.week_start)
        for feature in range(3):
            corpora[feature].sequences.append([s.deep_tokens[feature] for s in weeks])
    return corpora


def sg_loss_and_grads(
    center_vec: np.ndarray,
    context_vec: np.ndarray,
    negative_vecs: Sequence[np.ndarray],
):
    """SGNS loss and analytic gradients for one (center, context) pair.

    loss = -log s(u.v) - sum_k log s(-u.n_k) with u the center's input
    vector, v the context's output vector and n_k the negatives' output
    vectors. Returns (loss, d_center, d_context, d_negatives).
    """
    u = center_vec
    score = sigmoid(np.array([u @ context_vec]))[0]
    loss = -np.log(max(score, np.finfo(float).tiny))
    # d/ds of -log s(s) is s(s) - 1
    d_context = (score - 1.0) * u
    d_center = (score - 1.0) * context_vec
    d_negatives = []
    for nv in negative_vecs:
        sneg = sigmoid(np.array([u @ nv]))[0]
        loss -= np.log(max(1.0 - sneg, np.finfo(float).tiny))
        d_center = d_center + sneg * nv
        d_negatives.append(sneg * u)
    return float(loss), d_center, d_context, d_negatives


def _negative_sampler(corpus: TokenCorpus, vocab: int) -> np.ndarray:
    """Cumulative distribution of the unigram frequencies raised to 0.75."""
    counts = np.zeros(vocab)
    for seq in corpus.sequences:
        for tok in seq:
            if not 0 <= tok < vocab:
                raise ValueError(f"token {tok} outside vocab {vocab}")
            counts[tok] += 1.0
    weights = counts ** 0.75
    total = weights.sum()
    if total <= 0:
        raise EmptyCorpus("corpus has no tokens")
    return np.cumsum(weights / total)


def train_skipgram(
    corpus: TokenCorpus,
    vocab: int,
    dim: int = 32,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    seed: int = 0,
) -> EmbeddingTable:
    """Train SGNS input vectors over the corpus; deterministic under seed.

    Input vectors start uniform in +-0.5/dim, output vectors at zero; the
    learning rate decays linearly to 1% of its initial value over all
    updates. A sampled negative equal to the context token is skipped, as
    in the reference word2vec implementation.
    """
    pairs = corpus.pairs(window)
    if not pairs:
        raise EmptyCorpus("no skip-gram pairs at this window size")
    rng = np.random.default_rng(seed)
    bound = 0.5 / dim
    inputs = rng.uniform(-bound, bound, size=(vocab, dim))
    outputs = np.zeros((vocab, dim))
    cdf = _negative_sampler(corpus, vocab)

    total_steps = epochs * len(pairs)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for k in order:
            center, context = pairs[k]
            alpha = lr * max(0.01, 1.0 - step / total_steps)
            step += 1
            neg_tokens = [int(np.searchsorted(cdf, r)) for r in rng.random(negatives)]
            neg_tokens = [t for t in neg_tokens if t != context]
            _, d_center, d_context, d_negs = sg_loss_and_grads(
                inputs[center], outputs[context], [outputs[t] for t in neg_tokens]
            )
            inputs[center] -= alpha * d_center
            outputs[context] -= alpha * d_context
            for t, d in zip(neg_tokens, d_negs):
                outputs[t] -= alpha * d
        if not (np.isfinite(inputs).all() and np.isfinite(outputs).all()):
            raise FloatingPointError("skip-gram weights became non-finite")
    return EmbeddingTable(weights=inputs)
