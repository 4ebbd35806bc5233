"""Exception types shared across the package."""


class FilterError(Exception):
    """Base class for all pocketfilter errors."""


class InvalidEpsilonError(FilterError):
    """Epsilon is not a power of two in [1/n, 1/2]."""


class CapacityTooSmallError(FilterError):
    """Requested capacity is below the supported minimum."""


class PocketOverWordError(FilterError):
    """A pocket with these parameters would not fit in the word budget."""


class OutOfUniverseError(FilterError):
    """Key lies outside the structure's universe."""


class FilterOverflowError(FilterError):
    """Allocated capacity (spare or locator stash) is exhausted.

    This is the rare hard-failure event; callers may retry with a fresh
    seed or larger overrides.
    """


class AtCapacityError(FilterError):
    """The structure already holds its maximum cardinality."""


class NotFoundError(FilterError, KeyError):
    """Delete targeted a key that is not currently stored (caller bug)."""
