"""Exception types raised across the package."""


class NetGofError(Exception):
    """Base class for all package errors."""


class GraphFormatError(NetGofError, ValueError):
    pass


class DegenerateProbability(NetGofError, ValueError):
    """A probability entry is (numerically) 0 or 1 where a variance is needed."""


class DegenerateFit(NetGofError, ValueError):
    pass


class MleNonexistent(NetGofError, ValueError):
    """The likelihood has no finite maximizer for the observed data."""


class NonConvergence(NetGofError, RuntimeError):
    pass


class DegenerateBootstrap(NetGofError, RuntimeError):
    """Bootstrap replicates have zero spread, so standardization is undefined."""
