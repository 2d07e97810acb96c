"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class InterlinkError(Exception):
    """Base class for all toolkit errors."""


class UrlParseError(InterlinkError, ValueError):
    def __init__(self, text: str, reason: str = "no recognizable host"):
        self.text = text
        super().__init__(f"cannot parse URL {text!r}: {reason}")


class ReductionError(InterlinkError, ValueError):
    """A host could not be reduced to a site key (e.g. it is a public suffix)."""


class ConfigError(InterlinkError):
    """Inconsistent or invalid configuration (alias rules, pipeline config, ...)."""


class RegistryError(InterlinkError):
    """Malformed classification registry."""


class ClassificationError(InterlinkError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("unclassified site keys: " + ", ".join(self.missing))


class CrawlError(InterlinkError):
    """The seed of a crawl could not be fetched."""


class ProviderUnavailable(InterlinkError):
    """Transient provider failure; the query may be retried."""


class CapabilityError(InterlinkError):
    """The provider cannot answer this kind of query."""


class StructuralError(InterlinkError, ValueError):
    """Networks that must share a node list do not."""


class MetricError(InterlinkError, ValueError):
    """A measure is undefined for the given input."""


class PartialResultWarning(UserWarning):
    """Query splitting stopped while the provider still reported truncation.

    The records obtained so far travel with the warning.
    """

    def __init__(self, message: str, records=()):
        super().__init__(message)
        self.records = list(records)


class ClassificationWarning(UserWarning):
    pass


class CapabilityWarning(UserWarning):
    pass
