"""Word-level tokenizer with BOS/EOS/PAD framing and a placeholder slot."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .. import data

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
PLACEHOLDER = "<token>"
SPECIALS = (PAD, BOS, EOS)
MAX_LEN = 16

_SPLIT = re.compile(r"<token>|[a-z0-9']+|,")


class OutOfVocabulary(KeyError):
    def __init__(self, word):
        super().__init__(word)
        self.word = word

    def __str__(self):
        return f"word not in vocabulary: {self.word!r}"


def split_words(text: str) -> list:
    return _SPLIT.findall(text.lower())


@dataclass(frozen=True)
class PromptTemplate:
    """Token ids padded to a fixed length, with at most one placeholder."""

    ids: tuple
    length: int
    placeholder: int | None = None
    text: str = ""

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(len(self.ids), dtype=bool)
        m[: self.length] = True
        return m

    @property
    def has_placeholder(self) -> bool:
        return self.placeholder is not None


class Vocabulary:
    """Dense word -> id map: specials first, natural words, then placeholders."""

    def __init__(self, words, max_len: int = MAX_LEN):
        natural = sorted(set(words) - set(SPECIALS) - {PLACEHOLDER})
        self.words = list(SPECIALS) + natural
        self.n_natural = len(self.words)
        self.placeholders = []
        self.max_len = max_len
        self._ids = {w: i for i, w in enumerate(self.words)}
        self.add_placeholder(PLACEHOLDER)

    def add_placeholder(self, name: str) -> int:
        if name in self._ids:
            raise ValueError(f"{name!r} already in vocabulary")
        self._ids[name] = len(self.words)
        self.words.append(name)
        self.placeholders.append(name)
        return self._ids[name]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._ids

    def id(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise OutOfVocabulary(word) from None

    @property
    def pad_id(self):
        return self._ids[PAD]

    @property
    def bos_id(self):
        return self._ids[BOS]

    @property
    def eos_id(self):
        return self._ids[EOS]

    def is_placeholder(self, token_id: int) -> bool:
        return token_id >= self.n_natural

    def tokenize(self, text: str) -> PromptTemplate:
        words = split_words(text)
        ids = [self.id(w) for w in words]
        slots = [i + 1 for i, t in enumerate(ids) if self.is_placeholder(t)]
        if len(slots) > 1:
            raise ValueError(f"at most one placeholder per prompt: {text!r}")
        seq = [self.bos_id] + ids + [self.eos_id]
        if len(seq) > self.max_len:
            raise ValueError(f"prompt longer than {self.max_len - 2} words: {text!r}")
        n = len(seq)
        seq += [self.pad_id] * (self.max_len - n)
        return PromptTemplate(tuple(seq), n, slots[0] if slots else None, text)

    def decode(self, template: PromptTemplate) -> list:
        return [self.words[i] for i in template.ids[: template.length]]

    def to_list(self) -> list:
        return list(self.words)

    @classmethod
    def from_list(cls, words, max_len: int = MAX_LEN) -> "Vocabulary":
        rest = list(words[len(SPECIALS):])
        v = cls([w for w in rest if not w.startswith("<")], max_len)
        for w in rest:
            if w.startswith("<") and w not in v:
                v.add_placeholder(w)
        if v.words != list(words):
            raise ValueError("word list is not in canonical vocabulary order")
        return v


def default_words() -> set:
    words = {","}
    for name in ("attn_objects.txt", "attn_appearances.txt", "mix_objects.txt", "colors.txt",
                 "styles.txt", "shapes.txt", "textures.txt", "train_templates.txt",
                 "metric_prompts.txt"):
        for line in data.read_lines(name):
            words.update(split_words(line))
    for row in data.read_tsv("concept_descriptions.tsv"):
        words.update(split_words(row["description"]))
    words.discard(PLACEHOLDER)
    return words


def default_vocabulary() -> Vocabulary:
    return Vocabulary(default_words())
