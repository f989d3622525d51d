"""varcontext Package

Referring-expression grounding with a variational context model, built on a
small numpy autodiff core.

Easy import:
```python
from varcontext import VariationalContext, ModelParams, Trainer, load_config
```

Package structure:
- varcontext.VariationalContext: Language encoder, grounding head and optional decoder.
- varcontext.Heads: Interchangeable grounding heads.
    - varcontext.Heads.VC: Variational context head.
    - varcontext.Heads.MaxPool / varcontext.Heads.NoisyOr: MIL baselines.
    - varcontext.Heads.Random: Seeded chance baseline.
- varcontext.Suites: Property suites run by ``varcontext oracle``.
    - varcontext.Suites.oracle_suite: Decorator registering a suite.
    - varcontext.Suites.SuiteManager: Suite registry.
"""

from .core import ModelParams, VariationalContext
from .config import RunConfig, TrainParams, load_config
from .data import ReferringDataset, SynthConfig, load_annotations, save_annotations, synth_world
from .training import Trainer, load_checkpoint, save_checkpoint
from .evaluation import grounding_accuracy, compare_heads, elbo_oracle, ToyJoint

from .comprehension import VCHead, MaxPoolHead, NoisyOrHead, RandomHead, create_head
from .suites import oracle_suite, SuiteManager, SuiteResult, default_manager


class Heads:
    """Grounding heads"""
    VC = VCHead
    MaxPool = MaxPoolHead
    NoisyOr = NoisyOrHead
    Random = RandomHead
    create = staticmethod(create_head)


class Suites:
    """Property suite toolkit"""
    oracle_suite = oracle_suite
    SuiteManager = SuiteManager
    SuiteResult = SuiteResult
    default_manager = staticmethod(default_manager)


__all__ = [
    "VariationalContext", "ModelParams", "RunConfig", "TrainParams", "load_config",
    "ReferringDataset", "SynthConfig", "load_annotations", "save_annotations", "synth_world",
    "Trainer", "load_checkpoint", "save_checkpoint",
    "grounding_accuracy", "compare_heads", "elbo_oracle", "ToyJoint",
    "Heads", "Suites",
]
