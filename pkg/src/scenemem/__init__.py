"""Dynamic household scene-graph simulator, scene graph memory and object-search harness."""

__version__ = "0.1.0"
