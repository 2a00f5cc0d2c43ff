"""Vocabulary: token strings <-> token ids, with pad/bos/eos/unk specials.

Tokenization is whitespace-based: the toy model and the metrics in this
package treat a "token" as a whitespace-separated word. Adapter plugins for
subword models supply their own Vocabulary built from the subword inventory.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

TokenIds = tuple[int, ...]

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory; ids are positions in `tokens`."""

    tokens: tuple[str, ...]
    pad_id: int
    bos_id: int
    eos_id: int
    unk_id: int
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate token strings in vocabulary")
        for name, sid in (("pad", self.pad_id), ("bos", self.bos_id),
                          ("eos", self.eos_id), ("unk", self.unk_id)):
            if not 0 <= sid < len(self.tokens):
                raise ValueError(f"{name} id {sid} outside vocabulary of size {len(self.tokens)}")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocabulary":
        """Specials first, then the given word tokens."""
        toks = (PAD, BOS, EOS, UNK) + tuple(words)
        return cls(tokens=toks, pad_id=0, bos_id=1, eos_id=2, unk_id=3)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.pad_id, self.bos_id, self.eos_id, self.unk_id))

    def token_to_id(self, token: str) -> int:
        """Id of an exact token string, unk if absent."""
        return self._index.get(token, self.unk_id)

    def tokenize(self, text: str) -> TokenIds:
        """Whitespace-split `text` into token ids; unknown words map to unk.

        Raises ValueError on empty / whitespace-only input.
        """
        words = text.split()
        if not words:
            raise ValueError("cannot tokenize empty input")
        return tuple(self._index.get(w, self.unk_id) for w in words)

    def detokenize(self, ids: Sequence[int]) -> str:
        """Join token strings with single spaces; inverse of tokenize on unk-free input."""
        if len(ids) == 0:
            raise ValueError("cannot detokenize an empty sequence")
        out = []
        for i in ids:
            if not 0 <= int(i) < len(self.tokens):
                raise ValueError(f"token id {int(i)} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[int(i)])
        return " ".join(out)

    def validate_ids(self, ids: Sequence[int]) -> TokenIds:
        """Bounds-check a sequence of ids and return it as a tuple."""
        if len(ids) == 0:
            raise ValueError("token sequence must have length >= 1")
        for i in ids:
            if not 0 <= int(i) < len(self.tokens):
                raise ValueError(f"token id {int(i)} outside vocabulary of size {len(self.tokens)}")
        return tuple(int(i) for i in ids)


# Word inventory for the bundled toy model: 44 words + 4 specials = 48 ids.
TOY_WORDS = (
    "the", "a", "dog", "cat", "house", "tree", "river", "stone", "bird", "fish",
    "man", "woman", "child", "king", "road", "city", "ship", "star", "night", "day",
    "red", "blue", "green", "old", "young", "big", "small", "fast", "slow", "cold",
    "runs", "walks", "sees", "finds", "takes", "gives", "holds", "makes", "opens", "closes",
    "near", "far", "under", "over",
)


def toy_vocabulary() -> Vocabulary:
    return Vocabulary.from_words(TOY_WORDS)
