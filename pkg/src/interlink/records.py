"""Link observation records shared by the crawler, providers and datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .urls import SiteKey, Url


class Direction(str, enum.Enum):
    INLINKS = "inlinks"
    OUTLINKS = "outlinks"


@dataclass(frozen=True)
class ProviderTag:
    name: str
    retrieved_at: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.name:
            raise ValueError("provider name must be non-empty")


@dataclass(frozen=True)
class LinkRecord:
    """One directed source -> target link observation.

    ``source``/``target`` are the keys the provider reported; the raw URLs
    are kept so records can be re-reduced at another granularity later.
    """

    source: SiteKey
    target: SiteKey
    provider: ProviderTag
    source_url: Url | None = None
    target_url: Url | None = None

    @property
    def pair(self) -> tuple[str, str]:
        return self.source.value, self.target.value

    def counterpart(self, direction: Direction) -> SiteKey:
        return self.source if direction is Direction.INLINKS else self.target
