"""Change-pattern process modeling: models, patterns, sessions and deviation analysis.

Models, pattern instances, graphs and reports are plain dicts in the JSON wire
forms; session logs are JSONL strings.
"""

import json

from . import _core
from ._core import (
    BudgetExceeded,
    CorruptLog,
    InvariantViolation,
    ParseError,
    PatternbenchError,
    PatternError,
    Unreachable,
)

__version__ = _core.__version__

__all__ = [
    "BudgetExceeded",
    "CorruptLog",
    "InvariantViolation",
    "ParseError",
    "PatternError",
    "PatternbenchError",
    "Unreachable",
    "analyze",
    "applicable_patterns",
    "apply_pattern",
    "canonical_key",
    "dead_end",
    "digest",
    "distance",
    "empty_model",
    "replay",
    "soundness",
    "to_graph",
    "validate",
]


def _dump(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def empty_model():
    return json.loads(_core.empty_model())


def validate(model):
    """Returns the model re-serialized; raises InvariantViolation or ParseError."""
    return json.loads(_core.validate(_dump(model)))


def digest(model):
    return _core.digest(_dump(model))


def canonical_key(model):
    return _core.canonical_key(_dump(model))


def to_graph(model):
    return json.loads(_core.to_graph(_dump(model)))


def soundness(model):
    return json.loads(_core.soundness(_dump(model)))


def apply_pattern(model, pattern):
    return json.loads(_core.apply_pattern(_dump(model), _dump(pattern)))


def applicable_patterns(model, labels=None, conditions=None, include_deletes=True):
    return json.loads(_core.applicable_patterns(_dump(model), labels, conditions, include_deletes))


def replay(log, step=None):
    return json.loads(_core.replay(log, step))


def distance(source, target, alphabet=None, enumerate_limit=10_000, state_budget=None):
    return json.loads(_core.distance(_dump(source), _dump(target), alphabet, enumerate_limit, state_budget))


def dead_end(state, target, alphabet=None, state_budget=None):
    return json.loads(_core.dead_end(_dump(state), _dump(target), alphabet, state_budget))


def analyze(log, solution, regions=None, mode="STATE_CHANGING_ONLY", check_dead_ends=True, state_budget=None):
    return json.loads(
        _core.analyze(log, _dump(solution), None if regions is None else _dump(regions), mode, check_dead_ends,
                      state_budget))
