"""Exception types shared across the package."""


class SpectrumError(ValueError):
    """Malformed or unsupported spectrum input."""


class CapacityError(SpectrumError):
    """Requested spectrum would exceed the configured memory budget."""


class OutOfRangeError(SpectrumError):
    """Query beyond the generated range of a spectrum."""


class ExtendSpectrumError(SpectrumError):
    """The generated spectrum is too short for the requested accuracy.

    ``required_cutoff`` is an energy cutoff (same units as the spectrum)
    that is expected to be sufficient.
    """

    def __init__(self, message, required_cutoff):
        super().__init__(message)
        self.required_cutoff = float(required_cutoff)


class UnsupportedRegimeError(ValueError):
    """Input lies outside the hypotheses of the limit theorem being used."""


class RejectionFailure(RuntimeError):
    """Rejection sampler ran out of tries."""

    def __init__(self, message, acceptance):
        super().__init__(message)
        self.acceptance = acceptance


class ReplicaError(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"replica {index} failed: {cause!r}")
        self.index = index
        self.cause = cause
