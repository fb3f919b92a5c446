"""Exception hierarchy shared by every subsystem."""


class HomemanipError(Exception):
    pass


class EmptySelection(HomemanipError):
    """No point survived a label or height filter."""


class DegenerateCloud(HomemanipError):
    pass


class InvalidParameter(HomemanipError, ValueError):
    pass


class NoGraspFound(HomemanipError):
    pass


class NoRimFound(HomemanipError):
    pass


class UnknownFrame(HomemanipError, KeyError):
    pass


class DimensionMismatch(HomemanipError, ValueError):
    pass


class NonFiniteTarget(HomemanipError, ValueError):
    pass


class EpisodeOver(HomemanipError):
    pass
