"""Spectral, semiclassical and quench analysis of the parity-broken quantum Rabi model."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.0.0"
