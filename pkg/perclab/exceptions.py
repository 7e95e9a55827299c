class PerclabError(Exception):
    """
    Base class for every error raised by this package. The command line interface turns any of
    these into a nonzero exit status.
    """


class ParameterError(PerclabError, ValueError):
    """
    This exception is raised if a parameter is outside its documented range, e.g. a percolation
    parameter outside ``(0, 1]`` or ``q < p`` for a two-stage coupling.
    """


class GeometryError(PerclabError):
    """
    This exception is raised if a geometric object cannot be built or used: a cylinder too small
    for its direction, a box outside the sampled region, inconsistent regions or an unbounded
    halfspace intersection.
    """


class DomainError(PerclabError, ValueError):
    """
    This exception is raised if a function is evaluated outside its domain, e.g. a dual norm at
    the zero vector.
    """


class NotFoundClusterError(PerclabError, LookupError):
    """
    This exception is raised if a cluster id is not part of a labeling.
    """


class NotFoundResultError(PerclabError, LookupError):
    """
    This exception is raised if the results needed to emit plot data are missing.
    """


class ExperimentError(PerclabError):
    """
    This exception is raised if an experiment cannot produce a result, e.g. no replica passes the
    conditioning proxy.
    """


class SchemaError(PerclabError):
    """
    This exception is raised if an experiment configuration does not validate against the schema.
    The offending keys are available in :py:attr:`keys`.
    """

    def __init__(self, message: str, keys=()):
        super().__init__(message)
        #: The configuration keys that failed validation
        self.keys = tuple(keys)


class CapabilityError(PerclabError):
    """
    This exception is raised if an experiment is not supported in the requested dimension.
    """
