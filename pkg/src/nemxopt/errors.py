"""Exception types shared across the package."""


class NemxError(Exception):
    """Base class for package-specific errors."""


class ConfigError(NemxError):
    """Invalid scenario configuration; carries one message per violation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SandwichError(NemxError):
    """Salvage value is not sandwiched between export and retail rates.

    The threshold structure of the policy is only guaranteed when the
    per-kWh value of stored energy sits between the worst export rate and
    the best retail rate over the horizon.
    """


class InfeasibleTargetError(NemxError):
    """Requested aggregate consumption is outside the response range."""


class OracleScaleError(NemxError):
    """Brute-force search grid exceeds the desk-scale guard."""


class ProbeError(NemxError):
    """A comparative-statics probe could not be carried out."""


class MetricError(NemxError):
    """A report metric is undefined for the given inputs."""


class SweepError(NemxError):
    """A parameter sweep has no feasible grid points."""
