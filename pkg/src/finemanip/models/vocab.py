"""Word-level vocabulary over the closed instruction lexicon."""
from __future__ import annotations

import hashlib

import torch

from ..errors import EmptyTextError
from ..language import lexicon, tokenize

PAD, UNK = "<pad>", "<unk>"


class Vocabulary:
    """Stable token → index map; index 0 is padding, 1 is the unknown token."""

    def __init__(self, words=None):
        words = sorted(set(words if words is not None else lexicon()) - {PAD, UNK})
        self.itos = [PAD, UNK] + words
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def pad_index(self) -> int:
        return 0

    @property
    def unk_index(self) -> int:
        return 1

    def encode(self, text: str) -> list[int]:
        toks = tokenize(text)
        if not toks:
            raise EmptyTextError(f"no tokens in {text!r}")
        return [self.stoi.get(t, self.unk_index) for t in toks]

    def decode(self, ids) -> list[str]:
        return [self.itos[int(i)] for i in ids if int(i) != self.pad_index]

    def batch(self, texts, max_len: int | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Padded id tensor (B × T) and boolean padding mask (True = pad)."""
        seqs = [self.encode(t) for t in texts]
        T = max(len(s) for s in seqs)
        if max_len is not None:
            T = min(T, max_len)
        ids = torch.zeros(len(seqs), T, dtype=torch.long)
        for i, s in enumerate(seqs):
            s = s[:T]
            ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, ids == self.pad_index

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode()).hexdigest()[:16]
