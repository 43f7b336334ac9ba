"""Access to bundled contracts, traces, and golden files."""

from __future__ import annotations

from importlib import resources


def asset_path(*parts: str) -> str:
    """Absolute path of a file under the packaged data directory."""
    return str(resources.files("agentcontracts").joinpath("data", *parts))
