"""Image/text embedders and the similarity metrics built on them."""
from __future__ import annotations

from typing import Protocol

import numpy as np

from ..conditioning import PLACEHOLDER, split_words
from ..synthcorpus import COLORS, SHAPES, TEXTURES, attribute_oracle

ATTRIBUTES = {"object": SHAPES, "color": COLORS, "style": TEXTURES}
_BLOCKS = {}
_o = 0
for _name, _words in ATTRIBUTES.items():
    _BLOCKS[_name] = slice(_o, _o + len(_words))
    _o += len(_words)
_OTHER = _o
DIM = _o + 1


class Embedder(Protocol):
    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class ToyEmbedder:
    """Attribute-space embedder for the synthetic corpus.

    Images map to the oracle's shape, colour and texture score vectors laid
    end to end; text maps to indicators of the attribute words it mentions.
    One extra "other" coordinate keeps blank images and attribute-free text
    away from the zero vector.  ``concept_words`` replaces the placeholder
    when embedding text.
    """

    def __init__(self, concept_words: str = ""):
        self.concept_words = concept_words

    def image_scores(self, image) -> np.ndarray:
        r = attribute_oracle(image)
        v = np.zeros(DIM)
        v[_BLOCKS["object"]] = r.shape_scores
        v[_BLOCKS["color"]] = r.color_scores
        v[_BLOCKS["style"]] = r.texture_scores
        return v

    def embed_image(self, image) -> np.ndarray:
        v = self.image_scores(image)
        if not v.any():
            v[_OTHER] = 1.0
        return _unit(v)

    def embed_text(self, text: str) -> np.ndarray:
        text = text.lower().replace(PLACEHOLDER, self.concept_words)
        v = np.zeros(DIM)
        for w in split_words(text):
            for name, words in ATTRIBUTES.items():
                if w in words:
                    v[_BLOCKS[name].start + words.index(w)] = 1.0
        if not v.any():
            v[_OTHER] = 1.0
        return _unit(v)

    def attribute_similarity(self, image, attribute: str, word: str) -> float:
        """Cosine between the image's block for ``attribute`` and the indicator of ``word``."""
        block = self.image_scores(image)[_BLOCKS[attribute]]
        n = np.linalg.norm(block)
        return 0.0 if n == 0 else float(block[ATTRIBUTES[attribute].index(word)] / n)


def cosine(a, b) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def text_similarity(images, prompt: str, embedder: Embedder) -> float:
    if len(images) == 0:
        raise ValueError("text_similarity needs at least one image")
    tv = embedder.embed_text(prompt)
    return float(np.mean([cosine(embedder.embed_image(im), tv) for im in images]))


def subject_similarity(generated, references, embedder: Embedder) -> float:
    """Mean cosine over all (generated, reference) pairs."""
    if len(generated) == 0 or len(references) == 0:
        raise ValueError("subject_similarity needs nonempty image sets")
    g = np.stack([embedder.embed_image(im) for im in generated])
    r = np.stack([embedder.embed_image(im) for im in references])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    return float((g @ r.T).mean())
