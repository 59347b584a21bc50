class PDEForgeError(Exception):
    """ Base class of every error raised by pde_forge """


class FormatError(PDEForgeError):
    """ Malformed EPDE-GRID text """
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ShapeError(PDEForgeError):
    """ Value count or grid mismatch """


class DataError(PDEForgeError):
    """ Non-finite or otherwise unusable data """
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(f"{message} (flat index {index})" if index is not None else message)


class ConfigurationError(PDEForgeError):
    """ Settings that cannot work together """


class ArgumentError(PDEForgeError, ValueError):
    """ Invalid argument passed to an operation """


class MissingTokenError(PDEForgeError, KeyError):
    """ A token signature that the cache cannot resolve """
    def __init__(self, signature: str):
        self.signature = signature
        super().__init__(f"token '{signature}' is not in the cache")

    def __str__(self) -> str:
        return self.args[0]


class DatasetIOError(PDEForgeError):
    """ Reading or writing a dataset file failed """
