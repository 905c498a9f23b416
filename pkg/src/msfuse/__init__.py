"""Late fusion of RGB and thermal pedestrian detections with a language branch."""

__version__ = "0.1.0"
