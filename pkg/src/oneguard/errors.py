"""Exception types shared across the package."""


class ConfigError(Exception):
    """A pulse-schedule inconsistency surfaced at runtime.

    A schedule that passed validation with zero errors should never raise
    this; seeing one means the schedule bypassed ``validate``.
    """


class MonitorFault(Exception):
    """A monitored signal is unusable (non-finite value).

    The monitor reports these per signal instead of raising, so one bad
    diagnostic cannot take down the whole event chain.
    """


class SimFault(Exception):
    """The surrogate plant received a non-finite actuator command."""


class TraceError(Exception):
    """A trace file cannot be replayed (bad columns, non-monotone time)."""
