"""Corpus ingestion and batching.

One sentence per line, character-level tokenization.  Sentences are kept
as tuples of token ids; grouping into equal-length forward batches happens
inside the models, so batches here are plain lists.
"""

from __future__ import annotations

from .errors import CorpusError
from .vocab import Vocab


def encode_line(line: str, vocab: Vocab, max_len: int, lineno: int):
    if line == "":
        raise CorpusError(f"line {lineno}: empty sentence")
    if len(line) > max_len:
        raise CorpusError(f"line {lineno}: length {len(line)} exceeds maximum {max_len}")
    try:
        return vocab.encode(line)
    except KeyError as e:
        raise CorpusError(f"line {lineno}: unknown character {e.args[0]}") from None


def load_corpus(path, vocab: Vocab, max_len: int):
    """Read one sentence per line; returns a list of id tuples in file order."""
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # trailing newline, not an empty sentence
    return [encode_line(line, vocab, max_len, i + 1) for i, line in enumerate(lines)]


def decode_corpus(seqs, vocab: Vocab) -> str:
    """Inverse of load_corpus: newline-terminated text."""
    return "".join(vocab.decode(s) + "\n" for s in seqs)


def shuffled_batches(seqs, batch_size: int, rng):
    """Endless batch stream; each pass over the data is a fresh permutation.

    The final batch of a pass may be short; every pass yields each sentence
    exactly once.
    """
    seqs = [tuple(int(t) for t in s) for s in seqs]
    if not seqs:
        raise ValueError("empty corpus")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n = len(seqs)
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield [seqs[i] for i in perm[start : start + batch_size]]
