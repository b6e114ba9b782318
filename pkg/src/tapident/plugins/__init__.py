"""The built-in identification plugins."""

from ..framework import PluginRegistry
from .known_ip import KnownIpPlugin, MatchTallyResult
from .source_addr import AddressListResult, SourceAddrPlugin

__all__ = [
    "AddressListResult",
    "KnownIpPlugin",
    "MatchTallyResult",
    "SourceAddrPlugin",
    "default_registry",
]


def default_registry() -> PluginRegistry:
    """The device's shipped plugin set."""
    registry = PluginRegistry()
    registry.register(SourceAddrPlugin)
    registry.register(KnownIpPlugin)
    return registry
