"""Exception types shared across the package.

Every named failure mode raises its own class so callers (and tests) can
match on the condition rather than on message text.
"""


class ForestVarError(ValueError):
    """Base class for all errors raised by this package."""


class KOutOfRange(ForestVarError):
    """Subsample size k is outside 1 <= k < n (or k > n where k = n is allowed)."""


class MTooLarge(ForestVarError):
    """Group size M exceeds floor(n / k), so M disjoint subsets cannot exist."""


class DegenerateEnsemble(ForestVarError):
    """Fewer than two kernel evaluations: no variance can be estimated."""


class GroupTooSmall(ForestVarError):
    """Within-group variance needs at least M = 2 subsets per group."""


class EmptySubsample(ForestVarError):
    """A tree was asked to fit on an empty index set."""


class DimensionMismatch(ForestVarError):
    """A target point's dimension differs from the training feature count."""


class NegativeVariance(ForestVarError):
    """A confidence interval was requested for a negative variance."""


class IndexOutOfRange(ForestVarError):
    """A combinatorial coefficient was requested outside 0 <= d <= k <= n."""


class CombinatorialBlowup(ForestVarError):
    """An exhaustive enumeration would exceed the configured cap."""


class KTooLargeForVh(ForestVarError):
    """Disjoint-pair enumeration requires 2k <= n."""


class KTooLarge(ForestVarError):
    """Pairing weights require 2k <= n."""


class MalformedCsv(ForestVarError):
    """A CSV row could not be parsed against the declared schema."""


class UnknownColumn(ForestVarError):
    """The schema references a column absent from the file."""


class NonFiniteValue(ForestVarError):
    """A value was NaN/inf after ingestion, or missing without a policy."""


class InvalidConfig(ForestVarError):
    """Raised by ``require_valid``; carries the full violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(f"invalid configuration: {detail}")
