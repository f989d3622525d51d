from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Tuple
import logging

import numpy as np

from varcontext.compute import ParameterStore, Tensor, stack
from varcontext.comprehension import GroundingScores, create_head
from varcontext.data import ExpressionRecord, ReferringDataset, Scene
from varcontext.errors import ConfigError, ModeError
from varcontext.generation import ExpressionDecoder
from varcontext.language import CueFeatures, LanguageEncoder, Vocabulary

logger = logging.getLogger(__name__)


@dataclass(kw_only=True)
class ModelParams:
    """Dimensions and ablation flags of a model."""
    visual_dim: int = 16
    use_visdif: bool = True
    embedding_dim: int = 64
    lstm_hidden: int = 64
    decoder_hidden: int = 128
    max_len: int = 20
    gen_min_count: int = 5
    dropout: float = 0.3
    head: str = "vc"
    generation: bool = False
    wo_reg: bool = False
    wo_alpha: bool = False
    exclude_self: bool = False

    @property
    def feature_dim(self) -> int:
        return self.visual_dim * (2 if self.use_visdif else 1) + 5

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any], **overrides: Any) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        merged = {k: v for k, v in values.items() if k in known}
        merged.update({k: v for k, v in overrides.items() if k in known and v is not None})
        return cls(**merged)

    @classmethod
    def full_scale(cls, **kwargs: Any) -> "ModelParams":
        """Dimensions of the full-scale setting."""
        params = dict(embedding_dim=300, lstm_hidden=1000, decoder_hidden=512)
        params.update(kwargs)
        return cls(**params)


class VariationalContext:
    """
    Referring-expression grounding model with a variational context head.

    The model owns every parameter in one `ParameterStore`: the language
    encoder (embeddings shared with the decoder, BLSTM, five cue heads), a
    grounding head chosen by name ("vc", "maxpool", "noisyor" or "random")
    and, when `params.generation` is set, the expression decoder.

    Args:
        params (ModelParams): Dimensions and flags.
        vocabulary (Vocabulary): Comprehension vocabulary.
        generation_vocabulary (Vocabulary, optional): Decoder vocabulary;
            required when `params.generation` is set.
        seed (int): Seed of parameter initialization.

    Example:
        >>> model = VariationalContext.for_dataset(ModelParams(), dataset)
        >>> scores = model.score(scene, expression)
        >>> scores.prediction()
    """

    def __init__(self, params: ModelParams, vocabulary: Vocabulary,
                 generation_vocabulary: Optional[Vocabulary] = None, seed: int = 0):
        if params.generation and params.head != "vc":
            raise ConfigError(f"Generation requires the vc head, not '{params.head}'")
        if params.generation and generation_vocabulary is None:
            raise ConfigError("Generation requires a generation vocabulary")
        self.params = params
        self.seed = seed
        self.vocabulary = vocabulary
        self.generation_vocabulary = generation_vocabulary if params.generation else None
        self.store = ParameterStore(seed)
        self.encoder = LanguageEncoder(self.store, vocabulary, params.embedding_dim, params.lstm_hidden,
                                       wo_alpha=params.wo_alpha)
        self.head = self._create_head()
        self.decoder: Optional[ExpressionDecoder] = None
        if params.generation:
            self.decoder = ExpressionDecoder(self.store, generation_vocabulary, vocabulary, self.encoder.embedding,
                                             params.feature_dim, hidden=params.decoder_hidden,
                                             dropout_rate=params.dropout, max_len=params.max_len)
        logger.info("Built %s model with %d parameter blocks", params.head, len(self.store))

    def _create_head(self):
        p = self.params
        if p.head == "vc":
            return create_head("vc", self.store, p.feature_dim, p.embedding_dim,
                               exclude_self=p.exclude_self, generation=p.generation)
        if p.head == "random":
            return create_head("random", seed=self.seed)
        return create_head(p.head, self.store, p.feature_dim, p.embedding_dim)

    # ------------------------------------------------------------------ #
    #  CONSTRUCTION                                                       #
    # ------------------------------------------------------------------ #

    @classmethod
    def for_dataset(cls, params: ModelParams, dataset: ReferringDataset, split: Optional[str] = "train",
                    seed: int = 0) -> "VariationalContext":
        """Build vocabularies from a split's expressions and create the model."""
        token_lists = [e.words for e in dataset.split(split if split in dataset.splits else None)]
        vocabulary = Vocabulary.build(token_lists)
        generation_vocabulary = Vocabulary.build(token_lists, min_count=params.gen_min_count) \
            if params.generation else None
        return cls(params, vocabulary, generation_vocabulary, seed=seed)

    @classmethod
    def from_metadata(cls, metadata: Dict[str, Any], params: Optional[ModelParams] = None) -> "VariationalContext":
        """Rebuild the architecture recorded in checkpoint metadata.

        `params` overrides the recorded dimensions; a mismatch surfaces when
        the parameter blocks are loaded.
        """
        params = params or ModelParams.from_dict(metadata.get("model", {}))
        vocabulary = Vocabulary(metadata.get("vocabulary", []))
        gen_words = metadata.get("generation_vocabulary")
        generation_vocabulary = Vocabulary(gen_words) if gen_words is not None else None
        return cls(params, vocabulary, generation_vocabulary, seed=int(metadata.get("seed", 0)))

    def metadata(self) -> Dict[str, Any]:
        meta: Dict[str, Any] = {
            "model": self.params.to_dict(),
            "vocabulary": self.vocabulary.words(),
            "seed": self.seed,
        }
        if self.generation_vocabulary is not None:
            meta["generation_vocabulary"] = self.generation_vocabulary.words()
        return meta

    # ------------------------------------------------------------------ #
    #  PUBLIC METHODS                                                     #
    # ------------------------------------------------------------------ #

    def parameters(self):
        return self.store.trainable()

    def scene_tensors(self, scene: Scene) -> Tuple[Tensor, Tensor]:
        """Region feature matrix X (N, D_x) and global feature I (D_x,)."""
        return (Tensor(scene.feature_matrix(self.params.use_visdif)),
                Tensor(scene.global_vector(self.params.use_visdif)))

    def cues(self, expression: ExpressionRecord) -> CueFeatures:
        return self.encoder.build_cues(expression.token_ids(self.vocabulary, pad_to=self.params.max_len))

    def scoring_mode(self, with_generation: bool = False) -> str:
        if self.params.wo_reg:
            return "wo_reg"
        return "with_generation" if with_generation else "plain"

    def score(self, scene: Scene, expression: ExpressionRecord, with_generation: bool = False) -> GroundingScores:
        """Grounding scores S (or S' when `with_generation`) and p(x|L).

        Raises:
            ConfigError: S' requested on a model without a decoder.
        """
        mode = self.scoring_mode(with_generation)
        if mode == "with_generation" and self.decoder is None:
            raise ConfigError("S' requested but the model has no generation module")
        X, I = self.scene_tensors(scene)
        cues = None if self.params.head == "random" else self.cues(expression)

        def psi_fn(beta: Tensor, pair: Tensor) -> Tensor:
            _, z_hat = self.decoder.joint_attention(X, beta)
            return stack([self.decoder.expression_log_likelihood(X[i], z_hat[i], I, expression.words)
                          for i in range(X.shape[0])])

        return self.head.score(X, cues, mode=mode, psi_fn=psi_fn if self.decoder is not None else None,
                               key=expression.id)

    def posterior(self, scene: Scene, expression: ExpressionRecord) -> np.ndarray:
        return self.score(scene, expression).posterior.numpy()

    def predict(self, scene: Scene, expression: ExpressionRecord) -> int:
        """Index of the region with the highest total score."""
        return self.score(scene, expression).prediction()

    def _require_decoder(self) -> ExpressionDecoder:
        if self.decoder is None:
            raise ModeError("This model was built without a generation module")
        return self.decoder

    def ce_loss(self, scene: Scene, expression: ExpressionRecord, region_index: int, scores: GroundingScores,
                training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Generation loss L_c of `expression` for region `region_index`.

        The joint attention reuses `scores.beta`, so the loss also reaches
        the context network.
        """
        decoder = self._require_decoder()
        X, I = self.scene_tensors(scene)
        _, z_hat = decoder.joint_attention(X, scores.beta, i=region_index)
        return decoder.ce_loss(X[region_index], z_hat, I, expression.words, training=training, rng=rng)

    def context_for_generation(self, scene: Scene, region_index: int,
                               expression: Optional[ExpressionRecord] = None) -> Tensor:
        """z_hat for a region; beta comes from `expression`, or is uniform without one."""
        decoder = self._require_decoder()
        X, _ = self.scene_tensors(scene)
        n = X.shape[0]
        if expression is not None:
            beta, _ = self.head.estimate_context(X, self.cues(expression))
        else:
            mask = self.head.context_mask(n)
            beta = Tensor(mask / mask.sum(axis=1, keepdims=True))
        _, z_hat = decoder.joint_attention(X, beta, i=region_index)
        return z_hat

    def generate(self, scene: Scene, region_index: int, expression: Optional[ExpressionRecord] = None) -> List[str]:
        """Greedy expression for a region."""
        decoder = self._require_decoder()
        X, I = self.scene_tensors(scene)
        z_hat = self.context_for_generation(scene, region_index, expression)
        return decoder.generate(X[region_index], z_hat, I)

    def expression_log_likelihood(self, scene: Scene, region_index: int, expression: ExpressionRecord) -> float:
        decoder = self._require_decoder()
        X, I = self.scene_tensors(scene)
        z_hat = self.context_for_generation(scene, region_index, expression)
        return float(decoder.expression_log_likelihood(X[region_index], z_hat, I, expression.words).item())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return self.store.state_dict()

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        self.store.load_state_dict(state)
