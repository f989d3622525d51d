"""Single-expression training loop with checkpointing and CSV metrics."""
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Iterator, List, Optional, Tuple
import csv
import logging
import queue
import threading

import numpy as np
from tqdm import tqdm

from varcontext.compute import SGDMomentum, Tensor, clip_grad_norm, lr_at
from varcontext.config import TrainParams
from varcontext.core import VariationalContext
from varcontext.data import ExpressionRecord, ReferringDataset
from varcontext.errors import ConfigError, ModeError, NumericalError, TrainingHalted
from varcontext.training.checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from varcontext.training.losses import entropy_term, supervised_loss, unsupervised_loss
from varcontext.training.reinforce import BaselineTracker, reinforce_generation_step, sample_referent

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["iteration", "mode", "loss", "loss_ce", "baseline", "lr", "train_acc_window"]
CHECKPOINT_NAME = "checkpoint.vck"
METRICS_NAME = "metrics.csv"


@dataclass
class TrainerState:
    """Mutable trainer state persisted in checkpoints."""
    iteration: int = 0
    baseline: float = 0.0
    lr: float = 0.01
    seed: int = 0
    mode: str = "supervised+plain"


@dataclass
class StepResult:
    loss: float
    loss_ce: Optional[float]
    correct: Optional[bool]
    lr: float


class ExpressionStream:
    """Deterministic per-epoch shuffled expression order.

    The epoch permutation depends only on (seed, epoch), so a stream started
    at any iteration reproduces the uninterrupted order. With `prefetch` the
    order is produced on a background thread through a bounded queue.
    """

    def __init__(self, expressions: List[ExpressionRecord], seed: int, prefetch: bool = False,
                 queue_size: int = 64):
        if not expressions:
            raise ModeError("Training split holds no expressions")
        self.expressions = expressions
        self.seed = seed
        self.prefetch = prefetch
        self.queue_size = queue_size

    def at(self, iteration: int) -> ExpressionRecord:
        n = len(self.expressions)
        epoch, position = divmod(iteration, n)
        order = np.random.default_rng([self.seed, epoch]).permutation(n)
        return self.expressions[int(order[position])]

    def iterate(self, start: int, stop: int) -> Iterator[Tuple[int, ExpressionRecord]]:
        if not self.prefetch:
            for iteration in range(start, stop):
                yield iteration, self.at(iteration)
            return
        hand_off: "queue.Queue" = queue.Queue(maxsize=self.queue_size)
        halt = threading.Event()

        def produce():
            for iteration in range(start, stop):
                if halt.is_set():
                    return
                hand_off.put((iteration, self.at(iteration)))
            hand_off.put(None)

        worker = threading.Thread(target=produce, name="expression-producer", daemon=True)
        worker.start()
        try:
            while True:
                item = hand_off.get()
                if item is None:
                    break
                yield item
        finally:
            halt.set()
            while worker.is_alive():
                try:
                    hand_off.get_nowait()
                except queue.Empty:
                    worker.join(timeout=0.01)


class Trainer:
    """
    Trains a `VariationalContext` one expression per step.

    The loss is assembled per mode: the supervised or unsupervised grounding
    loss minus the weighted posterior entropy, plus the generation loss on
    the ground-truth (or a sampled) referent in "with_generation" mode, or the
    REINFORCE surrogate in "with_generation_pg" mode.

    Args:
        model (VariationalContext): Model to train in place.
        dataset (ReferringDataset): Validated dataset.
        params (TrainParams): Schedule and modes.
        seed (int): Run seed driving order, sampling and dropout.
        out_dir (Path, optional): Receives checkpoint.vck and metrics.csv.
    """

    def __init__(self, model: VariationalContext, dataset: ReferringDataset, params: TrainParams,
                 seed: int = 0, out_dir: Optional[Path] = None):
        if model.params.head == "random":
            raise ConfigError("The random head has no parameters to train")
        if params.generation_mode != "plain" and model.decoder is None:
            raise ConfigError(f"Mode {params.generation_mode} needs a model built with generation")
        self.model = model
        self.dataset = dataset
        self.params = params
        self.out_dir = Path(out_dir) if out_dir is not None else None
        expressions = dataset.split(params.split if params.split in dataset.splits else None)
        if params.supervision == "supervised":
            missing = [e.id for e in expressions if e.referent_index is None]
            if missing:
                raise ModeError(f"Supervised training needs referents; {len(missing)} expressions lack one "
                                f"(first: {missing[:5]})")
        self.stream = ExpressionStream(expressions, seed, prefetch=params.prefetch)
        self.optimizer = SGDMomentum(model.parameters(), momentum=params.momentum,
                                     weight_decay=params.weight_decay, decay_biases=params.decay_biases)
        self.baseline = BaselineTracker(decay=params.baseline_decay)
        self.state = TrainerState(lr=params.base_lr, seed=seed, mode=params.mode_label)
        self.window: Deque[bool] = deque(maxlen=params.accuracy_window)

    # ------------------------------------------------------------------ #
    #  PERSISTENCE                                                        #
    # ------------------------------------------------------------------ #

    def checkpoint(self) -> ModelCheckpoint:
        metadata = self.model.metadata()
        metadata.update({"mode": self.state.mode, "dataset_fingerprint": self.dataset.fingerprint()})
        return ModelCheckpoint(params=self.model.state_dict(), iteration=self.state.iteration,
                               baseline=self.baseline.value, momentum=self.optimizer.state_dict(),
                               metadata=metadata)

    def save(self, path: Optional[Path] = None) -> Optional[Path]:
        path = path or (self.out_dir / CHECKPOINT_NAME if self.out_dir else None)
        if path is None:
            return None
        return save_checkpoint(path, self.checkpoint())

    def resume(self, path: Path) -> None:
        """Restore parameters, iteration, baseline and momentum buffers."""
        ckpt = load_checkpoint(path)
        self.model.load_state_dict(ckpt.params)
        self.optimizer.load_state_dict(ckpt.momentum)
        self.baseline.value = ckpt.baseline
        self.state.iteration = ckpt.iteration
        logger.info("Resumed from %s at iteration %d", path, ckpt.iteration)

    # ------------------------------------------------------------------ #
    #  ONE STEP                                                           #
    # ------------------------------------------------------------------ #

    def loss(self, expression: ExpressionRecord, rng: np.random.Generator) -> Tuple[Tensor, Optional[float], Optional[bool]]:
        """Mode-dependent loss of one expression; returns (loss, L_c, correct)."""
        p = self.params
        model = self.model
        scene = self.dataset.scene_of(expression)
        scores = model.score(scene, expression, with_generation=p.score_with_generation)
        gt = expression.referent_index
        if p.supervision == "supervised":
            loss = supervised_loss(scores, gt)
        else:
            loss = unsupervised_loss(scores)
        loss = loss - p.entropy_weight * entropy_term(scores)
        correct = None if gt is None else scores.prediction() == gt

        loss_ce = None
        if p.generation_mode == "with_generation":
            k = gt if p.supervision == "supervised" else sample_referent(scores.posterior.data, rng)
            ce = model.ce_loss(scene, expression, k, scores, training=True, rng=rng)
            loss_ce = float(ce.item())
            loss = loss + ce
        elif p.generation_mode == "with_generation_pg":
            surrogate, loss_ce, _ = reinforce_generation_step(model, scene, expression, scores,
                                                              self.baseline.value, rng, training=True)
            loss = loss + surrogate
            self.baseline.update(loss_ce)
        return loss, loss_ce, correct

    def step(self, iteration: int, expression: ExpressionRecord) -> StepResult:
        rng = np.random.default_rng([self.state.seed, iteration])
        lr = lr_at(iteration, self.params.base_lr, self.params.lr_decay, self.params.decay_interval)
        self.optimizer.zero_grad()
        loss, loss_ce, correct = self.loss(expression, rng)
        if not np.isfinite(loss.item()):
            raise NumericalError(f"Non-finite loss at iteration {iteration}")
        loss.backward()
        if self.params.clip_gradients:
            clip_grad_norm(self.optimizer.params, self.params.clip_norm)
        self.optimizer.step(lr)
        self.state.lr = lr
        return StepResult(loss=float(loss.item()), loss_ce=loss_ce, correct=correct, lr=lr)

    # ------------------------------------------------------------------ #
    #  LOOP                                                               #
    # ------------------------------------------------------------------ #

    def _metrics_writer(self):
        if self.out_dir is None:
            return None, None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / METRICS_NAME
        fresh = self.state.iteration == 0 or not path.exists()
        handle = open(path, "w" if fresh else "a", newline="", encoding="utf-8")
        writer = csv.writer(handle, lineterminator="\n")
        if fresh:
            writer.writerow(METRIC_COLUMNS)
        return handle, writer

    def train(self, iterations: Optional[int] = None) -> TrainerState:
        """Run until `iterations` (default: params.iterations) total steps.

        Raises:
            TrainingHalted: On a non-finite loss or gradient, after saving
                the last good checkpoint.
        """
        total = self.params.iterations if iterations is None else iterations
        start = self.state.iteration
        handle, writer = self._metrics_writer()
        progress = tqdm(total=max(total - start, 0), desc="train", disable=not self.params.show_progress)
        try:
            for iteration, expression in self.stream.iterate(start, total):
                try:
                    result = self.step(iteration, expression)
                except NumericalError as exc:
                    path = self.save()
                    logger.error("Halting at iteration %d: %s", iteration, exc)
                    raise TrainingHalted(f"Training halted at iteration {iteration}: {exc}",
                                         str(path) if path else None) from exc
                self.state.iteration = iteration + 1
                self.state.baseline = self.baseline.value
                if result.correct is not None:
                    self.window.append(result.correct)
                progress.update(1)
                if writer is not None and self.state.iteration % self.params.log_every == 0:
                    writer.writerow(self._metric_row(result))
                if self.state.iteration % self.params.log_every == 0:
                    logger.info("iteration %d loss %.4f lr %.5f acc %s", self.state.iteration, result.loss,
                                result.lr, self._window_accuracy())
                else:
                    logger.debug("iteration %d loss %.6f", self.state.iteration, result.loss)
                if self.out_dir is not None and self.state.iteration % self.params.checkpoint_every == 0:
                    self.save()
        finally:
            progress.close()
            if handle is not None:
                handle.close()
        if self.out_dir is not None:
            self.save()
        return self.state

    def _window_accuracy(self) -> str:
        if not self.window:
            return ""
        return f"{sum(self.window) / len(self.window):.6f}"

    def _metric_row(self, result: StepResult) -> List[str]:
        return [str(self.state.iteration), self.state.mode, f"{result.loss:.6f}",
                "" if result.loss_ce is None else f"{result.loss_ce:.6f}",
                f"{self.baseline.value:.6f}", f"{result.lr:.6g}", self._window_accuracy()]

    def training_accuracy(self) -> float:
        """Fraction of training expressions whose argmax is the referent."""
        expressions = self.stream.expressions
        hits = sum(self.model.predict(self.dataset.scene_of(e), e) == e.referent_index for e in expressions)
        return hits / len(expressions)
