"""Light-field spatial and angular super-resolution toolkit."""

__version__ = "0.1.0"
