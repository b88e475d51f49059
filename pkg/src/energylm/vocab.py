"""Closed character vocabulary with reserved control tokens.

File format: one token per line, line number = id, reserved tokens first.
Regular tokens are single characters; sentences are tokenized character by
character.
"""

from __future__ import annotations

RESERVED = ("<pad>", "<bos>", "<eos>", "<mask>")


class Vocab:
    def __init__(self, tokens):
        tokens = tuple(tokens)
        if tokens[: len(RESERVED)] != RESERVED:
            raise ValueError(f"vocabulary must start with reserved tokens {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        for tok in tokens[len(RESERVED):]:
            if len(tok) != 1:
                raise ValueError(f"regular tokens must be single characters, got {tok!r}")
        self.tokens = tokens
        self._id = {tok: i for i, tok in enumerate(tokens)}

    pad = 0
    bos = 1
    eos = 2
    mask = 3

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def regular_ids(self) -> range:
        """Ids that may appear inside a sentence."""
        return range(len(RESERVED), len(self.tokens))

    @property
    def alphabet_size(self) -> int:
        """Number of distinct sentence characters (excludes reserved ids)."""
        return len(self.tokens) - len(RESERVED)

    @classmethod
    def from_characters(cls, chars) -> "Vocab":
        return cls(RESERVED + tuple(sorted(set(chars))))

    def encode(self, text: str) -> tuple[int, ...]:
        try:
            return tuple(self._id[ch] for ch in text)
        except KeyError as e:
            raise KeyError(f"character {e.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            tok = self.tokens[i]
            if i < len(RESERVED):
                raise ValueError(f"cannot decode reserved id {i} ({tok})")
            out.append(tok)
        return "".join(out)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        tokens = [t for t in tokens if t != ""]
        return cls(tokens)
