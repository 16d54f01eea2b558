"""Renderers for comfb artifact directories (manifest.json + CSV contract)."""

from .artifacts import ArtifactError, SweepArtifacts, load_manifest
from .render import FigureJob, RenderInfo, render

__version__ = "0.1.0"
