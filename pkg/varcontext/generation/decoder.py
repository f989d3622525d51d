"""Context-aware expression decoder.

The decoder attends jointly over regions with phi_j = l2norm(beta_j * gamma_j),
where beta comes from the comprehension context estimate and gamma from its
own fc over [x_i, x_j]. It is primed with w_-1 = fc([x_i, z_hat_i, I]) and
then reads word embeddings from the comprehension matrix W_e.
"""
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from varcontext.compute import (Parameter, ParameterStore, Tensor, concat, dropout, fc, l2norm, log_softmax,
                                lstm_step, softmax)
from varcontext.comprehension.vc_head import pair_grid
from varcontext.errors import DimensionError
from varcontext.language import Vocabulary

logger = logging.getLogger(__name__)


class ExpressionDecoder:
    """LSTM generator sharing W_e with the comprehension encoder.

    Args:
        store (ParameterStore): Parameter owner.
        vocabulary (Vocabulary): Generation vocabulary (frequent words only).
        input_vocabulary (Vocabulary): Comprehension vocabulary indexing W_e.
        embedding (Parameter): Shared embedding matrix W_e.
        feature_dim (int): D_x; the global feature I has the same dimension.
        hidden (int): LSTM hidden size.
        dropout_rate (float): Dropout on hidden states while training.
        max_len (int): Maximum emitted tokens, stop word included.
    """

    def __init__(self, store: ParameterStore, vocabulary: Vocabulary, input_vocabulary: Vocabulary,
                 embedding: Parameter, feature_dim: int, hidden: int = 128, dropout_rate: float = 0.3,
                 max_len: int = 20):
        self.vocabulary = vocabulary
        self.embedding = embedding
        self.hidden = hidden
        self.dropout_rate = dropout_rate
        self.max_len = max_len
        self.feature_dim = feature_dim
        embedding_dim = embedding.shape[1]
        self.input_rows = np.array([input_vocabulary.id_of(vocabulary.word_of(i)) for i in range(len(vocabulary))])
        excluded = {vocabulary.pad_id, vocabulary.start_id}
        self.emitted = [i for i in range(len(vocabulary)) if i not in excluded]
        self.position = {token: k for k, token in enumerate(self.emitted)}
        self.init = store.linear("generation.init", embedding_dim, 3 * feature_dim)
        self.gamma = store.linear("generation.gamma", 1, 2 * feature_dim)
        self.lstm = store.linear("generation.lstm", 4 * hidden, embedding_dim + hidden)
        self.out = store.linear("generation.out", len(self.emitted), hidden)

    @property
    def output_size(self) -> int:
        """Number of tokens the decoder can emit (pad and start excluded)."""
        return len(self.emitted)

    def joint_attention(self, X: Tensor, beta: Tensor, i: Optional[int] = None) -> Tuple[Tensor, Tensor]:
        """phi weights and z_hat for every region, or for region `i` only.

        phi is L2-normalized, so it does not sum to 1 in general.
        """
        n = X.shape[0]
        if beta.shape != (n, n):
            raise DimensionError(f"joint_attention: beta {beta.shape} for {n} regions")
        left, right = pair_grid(X)
        gamma = softmax(fc(concat([left, right], axis=-1), *self.gamma).reshape(n, n), axis=1)
        phi = l2norm(beta * gamma, axis=1)
        if i is not None:
            phi = phi[i]
        return phi, phi @ X

    def targets(self, words: Sequence[str]) -> List[int]:
        """Generation ids of the words (at most max_len - 1) followed by stop."""
        ids = [self.vocabulary.id_of(w) for w in list(words)[:self.max_len - 1]]
        return ids + [self.vocabulary.stop_id]

    def _prime(self, x_i: Tensor, z_hat: Tensor, I: Tensor) -> Tuple[Tensor, Tensor]:
        w_init = fc(concat([x_i, z_hat, I]), *self.init)
        zero = Tensor(np.zeros(self.hidden))
        return lstm_step(w_init, (zero, zero), *self.lstm)

    def _step(self, token: int, state: Tuple[Tensor, Tensor], training: bool,
              rng: Optional[np.random.Generator]) -> Tuple[Tensor, Tuple[Tensor, Tensor]]:
        w = self.embedding[int(self.input_rows[token])]
        h, c = lstm_step(w, state, *self.lstm)
        logits = fc(dropout(h, self.dropout_rate, rng, training), *self.out)
        return log_softmax(logits), (h, c)

    def _step_distributions(self, x_i: Tensor, z_hat: Tensor, I: Tensor, words: Sequence[str]) -> List[np.ndarray]:
        """Teacher-forced per-step distributions over emitted tokens."""
        state = self._prime(x_i, z_hat, I)
        targets = self.targets(words)
        out = []
        for token in [self.vocabulary.start_id] + targets[:-1]:
            log_p, state = self._step(token, state, False, None)
            out.append(np.exp(log_p.data))
        return out

    def expression_log_likelihood(self, x_i: Tensor, z_hat: Tensor, I: Tensor, words: Sequence[str],
                                  training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """log s_psi: sum of teacher-forced log-probabilities of words and stop."""
        state = self._prime(x_i, z_hat, I)
        targets = self.targets(words)
        inputs = [self.vocabulary.start_id] + targets[:-1]
        total = None
        for token, target in zip(inputs, targets):
            log_p, state = self._step(token, state, training, rng)
            term = log_p[self.position[target]]
            total = term if total is None else total + term
        return total

    def ce_loss(self, x_i: Tensor, z_hat: Tensor, I: Tensor, words: Sequence[str],
                training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        return -self.expression_log_likelihood(x_i, z_hat, I, words, training, rng)

    def generate(self, x_i: Tensor, z_hat: Tensor, I: Tensor) -> List[str]:
        """Greedy decoding until stop or max_len emitted tokens."""
        state = self._prime(x_i, z_hat, I)
        token = self.vocabulary.start_id
        words: List[str] = []
        for _ in range(self.max_len):
            log_p, state = self._step(token, state, False, None)
            token = self.emitted[int(np.argmax(log_p.data))]
            if token == self.vocabulary.stop_id:
                break
            words.append(self.vocabulary.word_of(token))
        return words
