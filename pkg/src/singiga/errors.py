class GeometryError(ValueError):
    """Invalid geometry: non-positive weight or Jacobian determinant."""


class LevelError(ValueError):
    """Refinement level below what an operation requires."""


class GramConditioningError(ArithmeticError):
    """A Gram matrix is numerically singular."""


class SingularPointError(ValueError):
    """Inverse singular map requested at u <= 0."""
