"""Exception hierarchy shared across the toolkit."""


class EndoctrlError(Exception):
    """Base class for all structured errors raised by this package."""


class ConfigurationError(EndoctrlError):
    """Invalid model spec, smoother config, or experiment config."""


class UnsupportedFamilyError(EndoctrlError):
    """Requested oracle/operation is not available for this model family."""


class OracleInfeasibleError(EndoctrlError):
    """Brute-force oracle cannot produce a reliable value (e.g. the
    conditioning window accepted too few draws)."""


class SingularFitError(EndoctrlError):
    """Local weighted least-squares design is rank deficient."""

    def __init__(self, msg, effective_sample_size=float("nan")):
        super().__init__(msg)
        self.effective_sample_size = effective_sample_size


class SupportError(EndoctrlError):
    """Evaluation point lies outside the estimable support (trimmed)."""

    def __init__(self, msg, density=float("nan")):
        super().__init__(msg)
        self.density = density


class NoSupportError(SupportError):
    """No observations carry positive weight near the evaluation point."""


class OverlapError(SupportError):
    """A treatment arm has no local effective sample at the evaluation
    point, or common support fails beyond the tolerated mass."""


class DegenerateColumnError(EndoctrlError):
    """A conditioning column has zero variance."""


class NearZeroDenominatorError(EndoctrlError):
    """Denominator derivative of a ratio estimator is below the floor."""

    def __init__(self, msg, denominator=float("nan")):
        super().__init__(msg)
        self.denominator = denominator


class InstabilityError(EndoctrlError):
    """Too many bootstrap replicates failed for the SE to be trusted."""


class ExperimentError(EndoctrlError):
    """An experiment-level failure (e.g. an estimator failed in most
    replicates)."""


class WeakInstrumentWarning(UserWarning):
    """First-stage F statistic below the relevance floor."""
