"""Expression encoder: embeddings, a 2-layer BLSTM and five cue attention heads.

Each cue head scores every token with its own fc layer over the BLSTM state,
takes a softmax over non-pad tokens and pools the WORD EMBEDDINGS (not the
hidden states) with those weights.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple
import logging

import numpy as np

from varcontext.compute import Parameter, ParameterStore, Tensor, concat, fc, lstm_step, softmax, stack
from varcontext.errors import DimensionError, DomainError
from varcontext.language.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

CUES = ("c1", "c2", "r1", "r2", "g")


@dataclass
class CueFeatures:
    """Attention-pooled language vectors and their word weights.

    `alpha` holds plain arrays padded with zeros to the input token length.
    """
    y: Dict[str, Tensor]
    alpha: Dict[str, np.ndarray]

    @property
    def y_c1(self) -> Tensor:
        return self.y["c1"]

    @property
    def y_c2(self) -> Tensor:
        return self.y["c2"]

    @property
    def y_r1(self) -> Tensor:
        return self.y["r1"]

    @property
    def y_r2(self) -> Tensor:
        return self.y["r2"]

    @property
    def y_g(self) -> Tensor:
        return self.y["g"]


class LanguageEncoder:
    """Embedding matrix W_e, BLSTM and cue heads registered in one store.

    Args:
        store (ParameterStore): Receives every parameter under ``language.``.
        vocabulary (Vocabulary): Comprehension vocabulary.
        embedding_dim (int): D_w.
        hidden (int): Per-direction LSTM size; the encoder output is 4 * hidden.
        wo_alpha (bool): Replace learned attention by the uniform average.
    """

    def __init__(self, store: ParameterStore, vocabulary: Vocabulary, embedding_dim: int = 64,
                 hidden: int = 64, wo_alpha: bool = False):
        self.vocabulary = vocabulary
        self.embedding_dim = embedding_dim
        self.hidden = hidden
        self.wo_alpha = wo_alpha
        self.embedding: Parameter = store.create("language.embedding", (len(vocabulary), embedding_dim),
                                                 init="uniform", scale=0.1, decay=True)
        self.lstm: Dict[str, Tuple[Parameter, Parameter]] = {}
        for layer, in_dim in (("l1", embedding_dim), ("l2", 2 * hidden)):
            for direction in ("fwd", "bwd"):
                self.lstm[f"{layer}.{direction}"] = store.linear(
                    f"language.blstm.{layer}.{direction}", 4 * hidden, in_dim + hidden)
        self.cue_scorers = {cue: store.linear(f"language.cue.{cue}", 1, 4 * hidden) for cue in CUES}

    @property
    def output_dim(self) -> int:
        return 4 * self.hidden

    def embed(self, tokens: np.ndarray) -> Tensor:
        """Rows of W_e for the token ids; gradients reach only those rows."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 1:
            raise DimensionError(f"embed expects a 1-D id sequence, got shape {tokens.shape}")
        if np.any((tokens < 0) | (tokens >= len(self.vocabulary))):
            raise DomainError(f"token id out of vocabulary range in {tokens.tolist()}")
        return self.embedding[tokens]

    def _run(self, inputs: List[Tensor], name: str) -> List[Tensor]:
        W, b = self.lstm[name]
        h = Tensor(np.zeros(self.hidden))
        c = Tensor(np.zeros(self.hidden))
        outputs = []
        for x in inputs:
            h, c = lstm_step(x, (h, c), W, b)
            outputs.append(h)
        return outputs

    def blstm_encode(self, embedded: Tensor) -> Tensor:
        """Per-token [forward_1, backward_1, forward_2, backward_2] states, shape (T, 4H)."""
        if embedded.ndim != 2 or embedded.shape[0] < 1:
            raise DimensionError(f"blstm_encode expects (T >= 1, D) input, got {embedded.shape}")
        rows = [embedded[t] for t in range(embedded.shape[0])]
        f1 = self._run(rows, "l1.fwd")
        b1 = self._run(rows[::-1], "l1.bwd")[::-1]
        layer1 = [concat([f, b]) for f, b in zip(f1, b1)]
        f2 = self._run(layer1, "l2.fwd")
        b2 = self._run(layer1[::-1], "l2.bwd")[::-1]
        return stack([concat([a, b, c, d]) for a, b, c, d in zip(f1, b1, f2, b2)])

    def cue_attention(self, H: Tensor, embedded: Tensor, cue: str,
                      pad_mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
        """Attention weights over tokens and the pooled embedding for one cue.

        Args:
            H (Tensor): Encoder states (T, 4H).
            embedded (Tensor): Word embeddings (T, D_w).
            cue (str): One of c1, c2, r1, r2, g.
            pad_mask (np.ndarray, optional): True on real tokens.

        Returns:
            Tuple[Tensor, Tensor]: alpha (T,) and y (D_w,).
        """
        if cue not in self.cue_scorers:
            raise ValueError(f"Unknown cue '{cue}'. Expected one of {CUES}")
        T = H.shape[0]
        mask = np.ones(T, dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
        if mask.shape != (T,) or embedded.shape[0] != T:
            raise DimensionError(f"cue_attention: {T} states, {embedded.shape[0]} embeddings, mask {mask.shape}")
        if not mask.any():
            raise DomainError("cue_attention over an all-pad expression")
        if self.wo_alpha:
            alpha = Tensor(mask / mask.sum())
        else:
            W, b = self.cue_scorers[cue]
            alpha = softmax(fc(H, W, b).reshape(T), mask=mask)
        return alpha, alpha @ embedded

    def build_cues(self, tokens: np.ndarray) -> CueFeatures:
        """Run embed, the BLSTM and the five cue heads on a padded id sequence."""
        tokens = np.asarray(tokens, dtype=np.int64)
        mask = tokens != self.vocabulary.pad_id
        if not mask.any():
            raise DomainError("build_cues: every token is padding")
        length = int(mask.sum())
        if not mask[:length].all():
            raise DomainError("build_cues: padding must trail the expression")
        embedded = self.embed(tokens[:length])
        H = self.blstm_encode(embedded)
        y, alpha = {}, {}
        for cue in CUES:
            weights, pooled = self.cue_attention(H, embedded, cue)
            y[cue] = pooled
            padded = np.zeros(len(tokens))
            padded[:length] = weights.data
            alpha[cue] = padded
        return CueFeatures(y=y, alpha=alpha)

    def attention_rows(self, expression_id, words: List[str], cues: CueFeatures) -> List[List]:
        """Rows of the word-attention dump: expression_id, cue, token, weight."""
        rows = []
        for cue in CUES:
            for position, word in enumerate(words):
                rows.append([expression_id, cue, word, f"{cues.alpha[cue][position]:.6f}"])
        return rows


def load_glove(path: Path, vocabulary: Vocabulary, embedding: Parameter) -> int:
    """Copy pretrained vectors (``word v1 ... vD`` lines) into matching rows.

    Returns:
        int: Number of vocabulary rows filled.
    """
    filled = 0
    values = embedding.data.copy()
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            parts = line.split()
            if len(parts) < 2 or parts[0] not in vocabulary:
                continue
            vector = np.asarray(parts[1:], dtype=np.float64)
            if vector.shape[0] != values.shape[1]:
                raise DimensionError(
                    f"{path}:{line_number}: vector of dimension {vector.shape[0]}, embedding expects {values.shape[1]}")
            values[vocabulary.id_of(parts[0])] = vector
            filled += 1
    embedding.assign(values)
    missing = len(vocabulary.words()) - filled
    if missing > 0:
        logger.warning("%d vocabulary words have no pretrained vector in %s", missing, path)
    return filled
