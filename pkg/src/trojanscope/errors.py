"""Exception hierarchy shared by every stage of the pipeline."""


class TrojanScopeError(Exception):
    """Base class; ``stage`` is filled in by the orchestrator when re-raised."""

    stage: str | None = None


# netlist / library
class LibraryError(TrojanScopeError):
    pass


class ParseError(TrojanScopeError):
    pass


class UnknownCellType(ParseError):
    pass


class MultipleDrivers(ParseError):
    pass


class DanglingPin(ParseError):
    pass


class BehavioralConstruct(ParseError):
    pass


class UnknownNet(TrojanScopeError, KeyError):
    pass


class CombinationalLoop(TrojanScopeError):
    def __init__(self, nets):
        self.nets = list(nets)
        super().__init__("combinational loop through nets: " + ", ".join(self.nets))


# testability
class NonConvergence(TrojanScopeError):
    pass


# injector
class InsufficientCandidates(TrojanScopeError):
    pass


class NoValidPayload(TrojanScopeError):
    pass


class NameCollision(TrojanScopeError):
    pass


class Undecided(TrojanScopeError):
    pass


class LibraryMissingSequentialCell(TrojanScopeError):
    pass


# dataset / classifier
class FeatureMismatch(TrojanScopeError):
    pass


class Untrainable(TrojanScopeError):
    pass


class InsufficientData(TrojanScopeError):
    pass


class NetUniverseMismatch(TrojanScopeError):
    pass


class MissingFeature(TrojanScopeError):
    pass


class ConfigError(TrojanScopeError):
    pass
