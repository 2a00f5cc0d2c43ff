"""Shared fixtures-adjacent helpers: independent oracles and hand-set models.

Everything here is deliberately written as straight loops over explicit
formulas, independent of the library code paths it is used to check.
"""
from __future__ import annotations

import math

import numpy as np
import torch

from kwforge import ToyTranslationModel, Vocabulary


# -- brute-force oracles ---------------------------------------------------------

def brute_force_position(logits: np.ndarray, t: int) -> int:
    """Exhaustive scan for the smallest top-vs-target logit gap."""
    best_i, best_gap = 0, None
    for i in range(logits.shape[0]):
        gap = max(logits[i]) - logits[i][t]
        if best_gap is None or gap < best_gap:
            best_i, best_gap = i, gap
    return best_i


def brute_force_nth_target(logits: np.ndarray, n: int) -> tuple[int, int]:
    """Exhaustive scan for the n-th ranked token with the smallest gap."""
    best = None
    for i in range(logits.shape[0]):
        ranked = sorted(range(logits.shape[1]), key=lambda j: (-logits[i][j], j))
        tok = ranked[n - 1]
        gap = max(logits[i]) - logits[i][tok]
        if best is None or gap < best[0]:
            best = (gap, i, tok)
    return best[1], best[2]


def brute_force_projection(row: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                           embed_table: np.ndarray, excluded: set[int]) -> int:
    """Cosine scan of one mapped row against every mapped vocabulary token."""
    mapped_row = weight @ row + bias
    best_id, best_cos = None, None
    for j in range(embed_table.shape[0]):
        if j in excluded:
            continue
        cand = weight @ embed_table[j] + bias
        cos = float(np.dot(mapped_row, cand) / (np.linalg.norm(mapped_row) * np.linalg.norm(cand)))
        if best_cos is None or cos > best_cos:
            best_id, best_cos = j, cos
    return best_id


def substitution_attackable(model, ids, t) -> bool:
    """Does some single-token substitution put t into the greedy translation?

    Scans every position and every token the projection may emit (everything
    except pad/bos/eos).
    """
    vocab = model.vocabulary
    banned = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    candidates = [v for v in range(len(vocab)) if v not in banned]
    for i in range(len(ids)):
        for v in candidates:
            cand = list(ids)
            cand[i] = v
            if t in model.greedy_translate(cand):
                return True
    return False


# -- hand-set toy models -----------------------------------------------------------

def shift_by_three_model(decode_limit: int = 2) -> ToyTranslationModel:
    """Hand-set model that translates [w_i, w_j] to tokens i+3, j+3.

    One-hot embeddings over 12 ids (8 content words, specials at 8..11).
    The encoder marks source position p on the one-hot channel 8+p, each
    decoder step queries exactly that channel, and the context-to-state
    matrix shifts content channels up by three.
    """
    words = tuple(f"w{i}" for i in range(8))
    vocab = Vocabulary(tokens=words + ("<pad>", "<bos>", "<eos>", "<unk>"),
                       pad_id=8, bos_id=9, eos_id=10, unk_id=11)
    d = 12
    kappa = 8.0
    eye = torch.eye(d, dtype=torch.float64)
    P_src = torch.zeros(4, d, dtype=torch.float64)
    P_src[0, 8] = kappa
    P_src[1, 9] = kappa
    Q_step = torch.zeros(2, d, dtype=torch.float64)
    Q_step[0, 8] = kappa
    Q_step[1, 9] = kappa
    W_ctx = torch.zeros(d, d, dtype=torch.float64)
    for i in range(5):
        W_ctx[i, i + 3] = kappa
    return ToyTranslationModel(
        vocab, eye.clone(),
        W_enc=eye.clone(),
        P_src=P_src,
        W_dec=torch.zeros(d, d, dtype=torch.float64),
        Q_step=Q_step,
        W_ctx=W_ctx,
        W_qry=torch.zeros(d, d, dtype=torch.float64),
        b_z=torch.zeros(d, dtype=torch.float64),
        b_out=torch.zeros(d, dtype=torch.float64),
        tau=1.0,
        decode_limit=decode_limit,
    )


def masked_keyword_model(base: ToyTranslationModel, t: int) -> ToyTranslationModel:
    """Copy of a toy model whose output layer can never select token t."""
    b_out = base.b_out.clone()
    b_out[t] = -1e4
    return ToyTranslationModel(
        base.vocabulary, base.embed_table,
        W_enc=base.W_enc, P_src=base.P_src, W_dec=base.W_dec, Q_step=base.Q_step,
        W_ctx=base.W_ctx, W_qry=base.W_qry, b_z=base.b_z, b_out=b_out,
        tau=base.tau, decode_limit=base.decode_limit,
    )


def numpy_greedy_decode(model: ToyTranslationModel, source_ids) -> tuple[list[int], np.ndarray]:
    """Independent forward pass of the toy architecture in plain numpy."""
    vocab = model.vocabulary
    E = model.embed_table.numpy()
    e = E[np.array(source_ids)]
    H = e @ model.W_enc.numpy() + model.P_src.numpy()[: len(source_ids)]
    d = E.shape[1]
    prev = vocab.bos_id
    decoded, rows = [], []
    for j in range(model.decode_limit):
        u = E[prev] @ model.W_dec.numpy() + model.Q_step.numpy()[j]
        scores = H @ u / math.sqrt(d)
        scores = scores - scores.max()
        a = np.exp(scores) / np.exp(scores).sum()
        c = a @ H
        z = np.tanh(c @ model.W_ctx.numpy() + u @ model.W_qry.numpy() + model.b_z.numpy())
        logits = model.tau * (z @ E.T) + model.b_out.numpy()
        rows.append(logits)
        choice = logits.copy()
        choice[vocab.pad_id] = -np.inf
        choice[vocab.bos_id] = -np.inf
        if j == 0:
            choice[vocab.eos_id] = -np.inf
        nxt = int(choice.argmax())
        if nxt == vocab.eos_id:
            break
        decoded.append(nxt)
        prev = nxt
    return decoded, np.array(rows[: len(decoded)])


# -- deterministic corpora -----------------------------------------------------------

def toy_sentences(count: int = 60, seed: int = 123) -> list[tuple[int, ...]]:
    """Random content-token sentences of length 5..8 for the seeded toy model."""
    g = torch.Generator().manual_seed(seed)
    out = []
    for _ in range(count):
        n = int(torch.randint(5, 9, (1,), generator=g))
        out.append(tuple(int(torch.randint(4, 48, (1,), generator=g)) for _ in range(n)))
    return out


def markov_corpus_lines(vocab: Vocabulary, count: int = 1000, seed: int = 7) -> list[str]:
    """Sentences from a deterministic bigram chain, so a small LM has signal."""
    words = [t for i, t in enumerate(vocab.tokens) if i not in vocab.special_ids]
    W = len(words)
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(count):
        w = int(rng.integers(0, W))
        sent = [words[w]]
        for _ in range(int(rng.integers(4, 10))):
            nxt = [(w * 3 + 5) % W, (w * 7 + 11) % W, int(rng.integers(0, W))]
            w = nxt[rng.choice(3, p=[0.6, 0.3, 0.1])]
            sent.append(words[w])
        lines.append(" ".join(sent))
    return lines
