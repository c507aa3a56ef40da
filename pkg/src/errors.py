"""Exception roots shared across the pipeline.

Modules define their own subclasses next to the code that raises them; the CLI
maps the two families below onto exit codes.
"""


class EditImpactError(Exception):
    """Base error for the edit-impact pipeline."""

    pass


class DataError(EditImpactError):
    """Input data is malformed or violates a precondition."""

    pass


class BackendError(EditImpactError):
    """A remote backend failed or returned an unusable response."""

    pass
