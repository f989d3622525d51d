from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional
import logging

from varcontext.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    """Outcome of one property suite.

    `margins` maps a check name to its worst observed value; `limits` holds
    the bound each margin is compared against.
    """
    name: str
    passed: bool
    margins: Dict[str, float] = field(default_factory=dict)
    limits: Dict[str, float] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    cases: int = 0

    def lines(self) -> List[str]:
        out = [f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.cases} cases)"]
        for key, value in self.margins.items():
            limit = self.limits.get(key)
            bound = "" if limit is None else f" (limit {limit:.3e})"
            out.append(f"  {key} = {value:.3e}{bound}")
        out.extend(f"  violation: {failure}" for failure in self.failures)
        return out


class SuiteManager:
    """
    Register and run property suites by name.

    methods:
        register_suite(func): Register a function decorated with `oracle_suite`.
        load_from_module(module): Register every decorated suite of a module.
        get_suite_names(): Registered suite names.
        get_all_suites_metadata(): Metadata of every suite.
        get_suite_by_name(name): The suite function, or None.
        get_suites_by_tag(tag): Names of suites carrying a tag.
        run_suite(name, **kwargs): Run one suite and return its SuiteResult.
    """
    def __init__(self):
        self.registry: Dict[str, Callable[..., SuiteResult]] = {}
        self.duplicates: Dict[str, List[Callable[..., SuiteResult]]] = {}

    def register_suite(self, func: Callable[..., SuiteResult]) -> None:
        if not hasattr(func, "suite_metadata"):
            raise ConfigError(f"{func!r} is not decorated with @oracle_suite")
        name = func.suite_metadata["name"]
        if name in self.registry:
            self.duplicates.setdefault(name, []).append(func)
            logger.warning("Suite '%s' already registered from %s; keeping the first definition",
                           name, self.registry[name].__module__)
            return
        self.registry[name] = func

    def load_from_module(self, module: Any, tag: Optional[str] = None) -> List[str]:
        loaded = []
        for attr_name in dir(module):
            attr = getattr(module, attr_name)
            if callable(attr) and hasattr(attr, "suite_metadata"):
                if tag and tag not in attr.suite_metadata.get("tags", []):
                    continue
                self.register_suite(attr)
                loaded.append(attr.suite_metadata["name"])
        return loaded

    def get_suite_names(self) -> List[str]:
        return sorted(self.registry)

    def get_all_suites_metadata(self) -> Dict[str, Dict[str, Any]]:
        return {name: dict(func.suite_metadata) for name, func in sorted(self.registry.items())}

    def get_suite_by_name(self, name: str) -> Optional[Callable[..., SuiteResult]]:
        return self.registry.get(name)

    def get_suites_by_tag(self, tag: str) -> List[str]:
        return sorted(name for name, func in self.registry.items() if tag in func.suite_metadata.get("tags", []))

    def run_suite(self, name: str, **kwargs: Any) -> SuiteResult:
        """Run a registered suite.

        Raises:
            ConfigError: No suite is registered under `name`.
        """
        func = self.get_suite_by_name(name)
        if func is None:
            raise ConfigError(f"Unknown suite '{name}'. Expected one of {self.get_suite_names()}")
        result = func(**kwargs)
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, "Suite %s %s over %d cases", name, "passed" if result.passed else "failed", result.cases)
        return result


def default_manager() -> SuiteManager:
    """A manager holding the built-in elbo, gradcheck, reinforce and mil suites."""
    from varcontext.suites import builtin_suites

    manager = SuiteManager()
    manager.load_from_module(builtin_suites)
    return manager
