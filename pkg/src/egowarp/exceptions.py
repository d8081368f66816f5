"""Error types shared across the toolkit.

Everything derives from ValueError so callers that do not care about the
distinction can catch one thing. Plain ValueError is raised directly for
generic invalid arguments (non-finite inputs, bad shapes, empty lists).
"""


class AmbiguousLogError(ValueError):
    """Rotation angle within 1e-6 of pi; the log map has two preimages."""


class BehindCameraError(ValueError):
    """Projected point has z <= 1e-6 in the camera frame."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but has no usable content (e.g. |V| = 0)."""


class AssociationError(ValueError):
    """Trajectory timestamps could not be matched within tolerance."""


class DegenerateSnippetError(DegenerateInputError):
    """Snippet has zero predicted motion; the alignment scale is undefined."""
