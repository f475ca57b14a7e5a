"""Exception types shared across the package."""


class ConsensusSimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ConsensusSimError):
    """A service configuration violates one of its invariants."""


class TooFewReplicas(ConfigError):
    """n <= 3f: the replica count cannot mask the assumed fault bound."""


class TooManyInstances(ConfigError):
    """m exceeds what the replica pool (and the failure-handling mode) allows."""


class FactorialOverflow(ConfigError):
    """m! would not fit in 64 bits (m > 20)."""


class InvalidConfig(ConfigError):
    """Any other invalid configuration field (sigma, epsilon, clients, timing)."""


class ScenarioError(ConsensusSimError):
    """Scenario file or fault-injection validation failure."""


class SkipCollision(ConsensusSimError):
    """A skip tried to overwrite an already-decided round; scheduler bug."""


class NoReplicaAvailable(ConsensusSimError):
    """Primary selection ran out of candidates (failed set plus in-use set covers all replicas)."""


class ConflictingQuorums(ConsensusSimError):
    """Two distinct reply values each reached f+1 matching replies; non-divergence bug."""


class InvariantViolationError(ConsensusSimError):
    """A run-time invariant check failed; carries the reports and a recent trace window."""

    def __init__(self, message, reports=(), trace_tail=()):
        super().__init__(message)
        self.reports = list(reports)
        self.trace_tail = list(trace_tail)
