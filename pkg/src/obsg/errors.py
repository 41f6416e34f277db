"""Exception hierarchy shared across the package.

``DataError`` covers everything caused by the content of user inputs
(malformed manifests, failed validation, mismatched registries); the CLI
maps it to exit code 1 and genuine I/O or argument problems to exit code 2.
"""


class DataError(Exception):
    """Invalid or inconsistent input data."""


class ManifestError(DataError):
    """A manifest or prediction file could not be parsed or failed validation."""


class RegistryMismatchError(DataError):
    """A fitted model or paired file targets a different category registry."""


class TrainingDivergenceError(DataError):
    """Optimization produced non-finite values; inputs or hyperparameters are bad."""
