"""Shared exception base so the CLI can report any pipeline failure uniformly."""


class TalkgradeError(ValueError):
    pass
