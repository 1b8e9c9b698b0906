"""Invariant geometry, losses, masks, matching and Chamfer AP for vectorized HD maps."""

from .errors import NumericalError, ValidationError
from .geometry import (Category, MapInstance, Point2, Polyline, RelationClues, ShapeClues,
                       VectorMap, apply_rigid, displacement_vectors, load_map, relation_clues,
                       save_map, shape_clues)
from .losses import LossBreakdown, LossWeights, grad_total_loss, total_loss
from .matching import MatchResult, hungarian_match

__version__ = "0.1.0"
