"""Exception hierarchy shared by all relprop components."""


class RelpropError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(RelpropError):
    """Tensor or weight dimensions are inconsistent."""


class NonFiniteValue(RelpropError):
    """A NaN or Inf appeared where only finite values are allowed."""


class ParseError(RelpropError):
    """A model, tensor, or image file could not be parsed."""


class UnknownLayerType(RelpropError):
    """A model file names a layer variant this engine does not implement."""


class TraceMismatch(RelpropError):
    """An activation trace does not belong to the given model and input."""


class InvalidConfig(RelpropError):
    """A rule or perturbation configuration violates its constraints."""


class InactiveNeuron(RelpropError):
    """The relevance neuron is not active, so no reference point exists."""


class UnreachableEpsilon(RelpropError):
    """The search line never intersects the target pre-activation level."""


class NonNegativityViolated(RelpropError):
    """An operation restricted to nonnegative activations saw a negative one."""


class ConfigError(RelpropError):
    """A perturbation run cannot be performed with the given configuration."""


class BoxOutOfRange(RelpropError):
    """A bounding box does not lie fully inside the relevance map."""


class AllZero(RelpropError):
    """A statistic is undefined because the map contains only zeros."""


class SpecError(RelpropError):
    """A synthetic dataset specification is internally inconsistent."""


class DivergedTraining(RelpropError):
    """Training produced a non-finite loss or non-finite weights."""
