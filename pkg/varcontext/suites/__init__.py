"""Property suites: the `oracle_suite` decorator, the registry and the built-in suites."""
from .suite_decorators import oracle_suite
from .suite_manager import SuiteManager, SuiteResult, default_manager

__all__ = ["oracle_suite", "SuiteManager", "SuiteResult", "default_manager"]
