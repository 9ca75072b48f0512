"""Exception hierarchy.

Every error carries the CLI exit code it maps to:
1 usage/IO, 2 numerical failure, 3 existence/uniqueness refusal.
"""

from __future__ import annotations


class KronlikError(Exception):
    exit_code = 2


class DimensionMismatch(KronlikError, ValueError):
    exit_code = 1


class WrongShape(KronlikError, ValueError):
    exit_code = 1


class InsufficientData(KronlikError, ValueError):
    exit_code = 3


class NotPositiveDefinite(KronlikError, ValueError):
    exit_code = 2


class ExistenceRuledOut(KronlikError):
    exit_code = 3


class ExistenceNotGuaranteed(KronlikError):
    exit_code = 3


class DegenerateUpdate(KronlikError, ArithmeticError):
    exit_code = 2


class SingularDifference(KronlikError, ArithmeticError):
    exit_code = 2


class ZeroResidualCell(KronlikError, ArithmeticError):
    exit_code = 2


class DegenerateDenominator(KronlikError, ArithmeticError):
    exit_code = 2


class PoleOnGrid(KronlikError, ValueError):
    exit_code = 1


class RootNotBracketed(KronlikError, ArithmeticError):
    exit_code = 2


class NotInInterval(KronlikError, ValueError):
    exit_code = 1


class NotNonUnique(KronlikError, ValueError):
    exit_code = 3
