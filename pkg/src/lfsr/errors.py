"""Exception types shared across the toolkit.

Every error carries a short ``category`` string; the CLI prints it as the
first token of its error line so scripts can tell failure kinds apart.
"""


class LFSRError(Exception):
    category = "error"


class ShapeError(LFSRError, ValueError):
    category = "shape"


class RangeError(LFSRError, ValueError):
    category = "range"


class ContainerError(LFSRError):
    category = "container"


class ModelFormatError(LFSRError):
    category = "model-format"


class DivergenceError(LFSRError, FloatingPointError):
    category = "divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(LFSRError, ValueError):
    category = "config"


class MissingModelError(LFSRError, KeyError):
    category = "missing-model"

    def __init__(self, missing):
        self.missing = list(missing)
        names = ", ".join(f"(u={u}, v={v}, c={c})" for u, v, c in self.missing)
        super().__init__(f"no spatial model for {len(self.missing)} key(s): {names}")

    def __str__(self):
        return self.args[0]
