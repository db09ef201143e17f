"""Multi-task token transformer for face-based affect estimation, on a small numpy autodiff core."""

__version__ = "0.1.0"
