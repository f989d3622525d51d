"""Built-in property suites run by ``varcontext oracle <name>``."""
from typing import Callable, Dict, List, Tuple
import logging

import numpy as np

from varcontext.compute import (Tensor, clamp_min, concat, exp, fc, grad_check, l2norm, log, log_sigmoid,
                                log_softmax, lstm_step, max_select, sigmoid, softmax, stack, tanh)
from varcontext.core import ModelParams, VariationalContext
from varcontext.data import Box, ExpressionRecord, Region, RegionFeature, Scene
from varcontext.evaluation import ToyJoint, elbo_oracle, mil_maxpool_score, mil_noisyor_score
from varcontext.language import Vocabulary
from varcontext.suites.suite_decorators import oracle_suite
from varcontext.suites.suite_manager import SuiteResult
from varcontext.training import (BaselineTracker, ENTROPY_WEIGHT, entropy_term, estimator_samples,
                                 exact_expected_gradient, reinforce_surrogate, supervised_loss)

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-12
GRAD_TOL = 1e-4


@oracle_suite(name="elbo", tags=["oracle"])
def elbo_suite(toys: int = 1000, seed: int = 0, max_regions: int = 8, max_context_regions: int = 12) -> SuiteResult:
    """Certify ELBO <= log-marginal and KL >= 0 on random enumerable toys.

    Args:
        toys (int): Number of random toy joints.
        seed (int): Seed of the toy generator.
        max_regions (int): Largest referent count n.
        max_context_regions (int): Largest k; contexts are the 2**k subsets.
    """
    rng = np.random.default_rng(seed)
    worst_gap, worst_kl, worst_tight = -np.inf, np.inf, 0.0
    failures: List[str] = []
    for index in range(toys):
        n = int(rng.integers(1, max_regions + 1))
        k = int(rng.integers(0, max_context_regions + 1))
        toy = ToyJoint.random(rng, n, k, concentration=float(rng.choice([0.3, 1.0])))
        terms = elbo_oracle(toy)
        gap = float(np.max(terms.elbo - terms.log_marginal))
        kl = float(np.min(terms.kl))
        tight = elbo_oracle(toy.with_q(toy.exact_posterior()))
        tight_gap = float(np.max(np.abs(tight.elbo - tight.log_marginal)))
        worst_gap, worst_kl, worst_tight = max(worst_gap, gap), min(worst_kl, kl), max(worst_tight, tight_gap)
        if gap > BOUND_TOL or kl < -BOUND_TOL or tight_gap > BOUND_TOL:
            failures.append(f"toy {index} (n={n}, m={2 ** k}): gap={gap:.3e} kl={kl:.3e} tight={tight_gap:.3e}")

    # Point-mass prior: the bound reduces to log p(x, z*)
    joint = np.zeros((3, 4))
    joint[:, 2] = [0.2, 0.5, 0.3]
    q = np.zeros((3, 4))
    q[:, 2] = 1.0
    point = elbo_oracle(ToyJoint(joint, q))
    point_error = float(np.max(np.abs(point.elbo - np.log(joint[:, 2]))))
    if point_error > BOUND_TOL:
        failures.append(f"point-mass reduction off by {point_error:.3e}")

    margins = {"max_elbo_minus_log_marginal": worst_gap, "min_kl": worst_kl,
               "max_gap_at_posterior": worst_tight, "point_mass_error": point_error}
    limits = {"max_elbo_minus_log_marginal": BOUND_TOL, "min_kl": -BOUND_TOL,
              "max_gap_at_posterior": BOUND_TOL, "point_mass_error": BOUND_TOL}
    return SuiteResult("elbo", not failures, margins, limits, failures, cases=toys + 1)


def _op_cases(rng: np.random.Generator) -> List[Tuple[str, Callable[..., Tensor], List[np.ndarray]]]:
    def normal(*shape):
        return rng.normal(size=shape)

    mask = np.array([[True, False, True, True], [False, True, True, False], [True, True, True, True]])
    return [
        ("add", lambda a, b: a + b, [normal(3, 4), normal(4)]),
        ("sub", lambda a, b: a - b, [normal(3, 4), normal(3, 1)]),
        ("mul", lambda a, b: a * b, [normal(3, 4), normal(4)]),
        ("div", lambda a, b: a / b, [normal(3, 4), rng.uniform(0.5, 2.0, size=(4,))]),
        ("neg", lambda a: -a, [normal(5)]),
        ("matmul", lambda a, b: a @ b, [normal(3, 4), normal(4, 2)]),
        ("matvec", lambda a, b: a @ b, [normal(4), normal(4, 2)]),
        ("gather", lambda a: a[np.array([0, 2, 2])], [normal(3, 4)]),
        ("sum", lambda a: a.sum(axis=0), [normal(3, 4)]),
        ("mean", lambda a: a.mean(axis=1, keepdims=True), [normal(3, 4)]),
        ("reshape", lambda a: a.reshape(4, 3), [normal(3, 4)]),
        ("transpose", lambda a: a.T, [normal(3, 4)]),
        ("broadcast_to", lambda a: a.broadcast_to((3, 4)), [normal(1, 4)]),
        ("exp", exp, [normal(3, 4)]),
        ("log", log, [rng.uniform(0.5, 2.0, size=(3, 4))]),
        ("tanh", tanh, [normal(3, 4)]),
        ("sigmoid", sigmoid, [normal(3, 4)]),
        ("log_sigmoid", log_sigmoid, [normal(3, 4) * 3.0]),
        ("clamp_min", lambda a: clamp_min(a, 1e-3), [rng.uniform(0.1, 1.0, size=(6,)) * rng.choice([-1, 1], 6)]),
        ("max_select", lambda a: max_select(a, axis=1), [np.arange(12.0).reshape(3, 4) + normal(3, 4) * 0.1]),
        ("concat", lambda a, b: concat([a, b], axis=1), [normal(3, 2), normal(3, 4)]),
        ("stack", lambda a, b: stack([a, b], axis=0), [normal(4), normal(4)]),
        ("softmax", lambda a: softmax(a, mask=mask), [normal(3, 4)]),
        ("log_softmax", log_softmax, [normal(3, 4)]),
        ("l2norm", l2norm, [normal(3, 4)]),
        ("fc", fc, [normal(2, 3, 4), normal(5, 4), normal(5)]),
        ("lstm_step", lambda w, h, c, W, b: concat(lstm_step(w, (h, c), W, b)),
         [normal(3), normal(2), normal(2), normal(8, 5), normal(8)]),
    ]


def tiny_instance(seed: int = 0, generation: bool = False) -> Tuple[VariationalContext, Scene, ExpressionRecord]:
    """A 3-region scene, a 4-token expression and a model at tiny dimensions."""
    rng = np.random.default_rng(seed)
    words = ("the", "red", "cube", "left")
    params = ModelParams(visual_dim=2, use_visdif=False, embedding_dim=3, lstm_hidden=2, decoder_hidden=3,
                         gen_min_count=1, dropout=0.0, generation=generation)
    vocabulary = Vocabulary(sorted(words))
    model = VariationalContext(params, vocabulary, vocabulary if generation else None, seed=seed)
    regions = []
    for index in range(3):
        box = Box(1.0 + 3 * index, 1.0, 3.0 + 3 * index, 4.0)
        feature = RegionFeature(visual=rng.normal(size=2), spatial=rng.uniform(-1, 1, size=5))
        regions.append(Region(id=index, box=box, feature=feature))
    scene = Scene(id=0, width=10.0, height=10.0, regions=regions)
    expression = ExpressionRecord(id=0, scene_id=0, words=words, referent_index=1)
    return model, scene, expression


@oracle_suite(name="gradcheck", tags=["oracle"])
def gradcheck_suite(seed: int = 0, step: float = 1e-6) -> SuiteResult:
    """Central-difference checks of every operation and of end-to-end losses.

    Args:
        seed (int): Seed of inputs and model initialization.
        step (float): Finite-difference step.
    """
    rng = np.random.default_rng(seed)
    margins: Dict[str, float] = {}
    failures: List[str] = []
    cases = 0
    for name, op, arrays in _op_cases(rng):
        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        weights = rng.normal(size=op(*inputs).shape)
        report = grad_check(lambda: (op(*inputs) * weights).sum(), inputs, step=step)
        margins[f"op.{name}"] = report.max_error
        cases += 1

    model, scene, expression = tiny_instance(seed)

    def grounding_loss() -> Tensor:
        scores = model.score(scene, expression)
        return supervised_loss(scores, expression.referent_index) - ENTROPY_WEIGHT * entropy_term(scores)

    report = grad_check(grounding_loss, model.parameters(), step=step)
    margins["end_to_end.supervised"] = report.max_error
    cases += 1

    gen_model, scene, expression = tiny_instance(seed, generation=True)

    def generation_loss() -> Tensor:
        scores = gen_model.score(scene, expression)
        return gen_model.ce_loss(scene, expression, expression.referent_index, scores)

    report = grad_check(generation_loss, gen_model.parameters(), step=step, max_coords=12, seed=seed)
    margins["end_to_end.generation"] = report.max_error
    cases += 1

    failures.extend(f"{name}: {value:.3e}" for name, value in margins.items() if not value < GRAD_TOL)
    worst = max(margins.values())
    ordered = {"max_rel_error": worst, **margins}
    limits = {name: GRAD_TOL for name in ordered}
    return SuiteResult("gradcheck", not failures, ordered, limits, failures, cases=cases)


class _TwoRegionToy:
    """p(x) = softmax(theta) over two regions; L(x) = (w_x - t_x)^2 + offset."""

    def __init__(self, theta=(0.3, -0.2), w=(0.5, -0.4), t=(1.0, 0.2), offset: float = 2.0):
        self.theta = Tensor(np.asarray(theta, dtype=np.float64), requires_grad=True)
        self.w = Tensor(np.asarray(w, dtype=np.float64), requires_grad=True)
        self.t = np.asarray(t, dtype=np.float64)
        self.offset = offset

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.theta.detach()).numpy()

    def loss(self, k: int) -> Tensor:
        diff = self.w[k] - float(self.t[k])
        return diff * diff + self.offset

    def gradient(self, build: Callable[[], Tensor]) -> np.ndarray:
        self.theta.grad = None
        self.w.grad = None
        build().backward()
        return np.concatenate([self._grad(self.theta), self._grad(self.w)])

    @staticmethod
    def _grad(t: Tensor) -> np.ndarray:
        return t.grad.copy() if t.grad is not None else np.zeros_like(t.data)


@oracle_suite(name="reinforce", tags=["oracle"])
def reinforce_suite(samples: int = 10000, seed: int = 0, baseline_steps: int = 2000) -> SuiteResult:
    """Unbiasedness and variance reduction of the single-sample REINFORCE estimator.

    Args:
        samples (int): Estimator draws compared against the exact gradient.
        seed (int): Seed of the draws.
        baseline_steps (int): Moving-average updates before the baseline is frozen.
    """
    rng = np.random.default_rng(seed)
    toy = _TwoRegionToy()
    probs = toy.probs
    outcomes = range(len(probs))
    losses = np.array([toy.loss(k).item() for k in outcomes])

    score_grads = np.stack([toy.gradient(lambda k=k: log_softmax(toy.theta)[k]) for k in outcomes])
    loss_grads = np.stack([toy.gradient(lambda k=k: toy.loss(k)) for k in outcomes])
    exact = exact_expected_gradient(probs, losses, score_grads, loss_grads)
    direct = toy.gradient(lambda: (softmax(toy.theta) * stack([toy.loss(k) for k in outcomes])).sum())
    exact_error = float(np.max(np.abs(exact - direct)))

    def outcome_gradients(b: float) -> np.ndarray:
        return np.stack([toy.gradient(lambda k=k: reinforce_surrogate(toy.loss(k), log_softmax(toy.theta)[k], b))
                         for k in outcomes])

    tracker = BaselineTracker()
    for k in rng.choice(len(probs), size=baseline_steps, p=probs):
        tracker.update(losses[k])

    draws = rng.choice(len(probs), size=samples, p=probs)
    plain = estimator_samples(outcome_gradients(0.0), probs, samples, rng, outcomes=draws)
    with_baseline = estimator_samples(outcome_gradients(tracker.value), probs, samples, rng, outcomes=draws)

    failures: List[str] = []
    margins: Dict[str, float] = {"exact_vs_autograd": exact_error}
    if exact_error > 1e-12:
        failures.append(f"enumerated gradient differs from autograd by {exact_error:.3e}")
    worst_z = 0.0
    for label, values in (("plain", plain), ("baseline", with_baseline)):
        mean = values.mean(axis=0)
        se = values.std(axis=0, ddof=1) / np.sqrt(samples)
        z = np.abs(mean - exact) / np.maximum(se, 1e-12)
        z = np.where(np.abs(mean - exact) <= 1e-12, 0.0, z)
        worst_z = max(worst_z, float(z.max()))
        if np.any(z > 3.0):
            failures.append(f"{label} estimator mean off by {z.max():.2f} standard errors")
    ratio = with_baseline.var(axis=0) / np.maximum(plain.var(axis=0), 1e-300)
    margins.update({"max_standard_errors": worst_z, "max_variance_ratio": float(ratio.max()),
                    "baseline": tracker.value})
    if np.any(with_baseline.var(axis=0) > plain.var(axis=0) * (1 + 1e-12) + 1e-15):
        failures.append(f"baseline increased variance (ratio {ratio.max():.3f})")
    limits = {"exact_vs_autograd": 1e-12, "max_standard_errors": 3.0, "max_variance_ratio": 1.0}
    return SuiteResult("reinforce", not failures, margins, limits, failures, cases=samples)


@oracle_suite(name="mil", tags=["oracle"])
def mil_suite(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Closed-form values, monotonicity and limit agreement of the MIL aggregates.

    Args:
        cases (int): Random probability vectors for the fuzzed properties.
        seed (int): Seed of the generator.
    """
    rng = np.random.default_rng(seed)
    checks = {
        "maxpool_single": abs(mil_maxpool_score([0.3]) - np.log(0.3)),
        "noisyor_single": abs(mil_noisyor_score([0.5]) - np.log(0.5)),
        "noisyor_pair": abs(mil_noisyor_score([0.5, 0.5]) - np.log(0.75)),
        "noisyor_floor": abs(mil_noisyor_score([0.0, 0.0]) - np.log(1e-12)),
        "limit_agreement": abs(mil_maxpool_score([1.0, 0.0, 0.0]) - mil_noisyor_score([1.0, 0.0, 0.0])),
    }
    failures = [f"{name}: {value:.3e}" for name, value in checks.items() if value > 1e-9]

    worst_drop = 0.0
    argmax_disagreements = 0
    for _ in range(cases):
        m = int(rng.integers(1, 8))
        p = rng.uniform(0, 1, size=m)
        raised = p.copy()
        j = int(rng.integers(m))
        raised[j] = rng.uniform(p[j], 1.0)
        for score in (mil_maxpool_score, mil_noisyor_score):
            worst_drop = max(worst_drop, score(p) - score(raised))
        # Only one region has support: both aggregates pick it
        n = int(rng.integers(2, 6))
        support = int(rng.integers(n))
        pairs = np.zeros((n, m))
        pairs[support] = rng.uniform(0.05, 1.0, size=m)
        for score in (mil_maxpool_score, mil_noisyor_score):
            if int(np.argmax([score(row) for row in pairs])) != support:
                argmax_disagreements += 1
    if worst_drop > 1e-12:
        failures.append(f"raising a pair probability lowered a score by {worst_drop:.3e}")
    if argmax_disagreements:
        failures.append(f"{argmax_disagreements} single-support cases picked the wrong region")
    margins = {"max_closed_form_error": max(checks.values()), "max_monotonicity_drop": worst_drop,
               "argmax_disagreements": float(argmax_disagreements)}
    limits = {"max_closed_form_error": 1e-9, "max_monotonicity_drop": 1e-12, "argmax_disagreements": 0.0}
    return SuiteResult("mil", not failures, margins, limits, failures, cases=cases)
