"""Typed errors raised by the chemistry layer.

Every malformed input is rejected with a subclass of ChemError; parsing
never lets a bare IndexError/ValueError escape.
"""


class ChemError(ValueError):
    """Root of all chemistry-layer errors."""


class SmilesError(ChemError):
    """Root of SMILES parsing errors."""


class EmptyInput(SmilesError):
    pass


class SmilesSyntaxError(SmilesError):
    """Catch-all for structurally invalid SMILES text."""


class UnbalancedParenthesis(SmilesError):
    pass


class UnclosedRingBond(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class InvalidCharge(SmilesError):
    pass


class ValenceOverflow(SmilesError):
    """Explicit bonds on a bare organic-subset atom exceed its valence table."""


class MalformedReaction(ChemError):
    pass


class MultiFragmentProduct(ChemError):
    pass
