"""Training-free Zernike shape codec.

Geometry is encoded as complex Zernike moments of a unit-disk mask, optionally
enriched by frequency propagation; pose is encoded on a band of Zernike orders
through seeded radial windows; the two combine by phase modulation.
"""

from .errors import ZernshapeError
from .geometry import COMPLEX2REAL, MAGNITUDE, GeometryCodec
from .joint import JointCodec
from .posecodec import PoseCodec
from .shapes import GroundedShape, Pose, ShapeMask

__version__ = "0.1.0"

__all__ = ["COMPLEX2REAL", "MAGNITUDE", "GeometryCodec", "GroundedShape", "JointCodec", "Pose", "PoseCodec",
           "ShapeMask", "ZernshapeError"]
