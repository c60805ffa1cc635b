from __future__ import annotations

from .base import CurveSpec as CurveSpec
from .base import CurveSpecBase as CurveSpecBase
from .checks import AsymptoticReport as AsymptoticReport
from .checks import BilipschitzReport as BilipschitzReport
from .checks import PairSamplerConfig as PairSamplerConfig
from .checks import RandomPairSamplerConfig as RandomPairSamplerConfig
from .checks import StridePairSamplerConfig as StridePairSamplerConfig
from .checks import TubularRadiusEstimate as TubularRadiusEstimate
from .checks import check_asymptotic_condition as check_asymptotic_condition
from .checks import check_bilipschitz as check_bilipschitz
from .checks import estimate_r0 as estimate_r0
from .checks import shifted_curve_point as shifted_curve_point
from .curve import ArcLengthCurve as ArcLengthCurve
from .curve import ArcLengthMap as ArcLengthMap
from .curve import parallel_transport_frames as parallel_transport_frames
from .curve import reparametrize_arclength as reparametrize_arclength
from .families import CircularArcJointConfig as CircularArcJointConfig
from .families import PlanarBumpConfig as PlanarBumpConfig
from .families import StraightLineConfig as StraightLineConfig
from .families import UserParametricConfig as UserParametricConfig
