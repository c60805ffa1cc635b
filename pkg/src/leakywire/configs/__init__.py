from __future__ import annotations

__codegen__ = True

from leakywire import curve_registry as curve_registry
from leakywire.geometry import CircularArcJointConfig as CircularArcJointConfig
from leakywire.geometry import CurveSpec as CurveSpec
from leakywire.geometry import CurveSpecBase as CurveSpecBase
from leakywire.geometry import PairSamplerConfig as PairSamplerConfig
from leakywire.geometry import PlanarBumpConfig as PlanarBumpConfig
from leakywire.geometry import RandomPairSamplerConfig as RandomPairSamplerConfig
from leakywire.geometry import StraightLineConfig as StraightLineConfig
from leakywire.geometry import StridePairSamplerConfig as StridePairSamplerConfig
from leakywire.geometry import UserParametricConfig as UserParametricConfig
from leakywire.kernels import KernelParams as KernelParams
from leakywire.main import BoundarySuiteConfig as BoundarySuiteConfig
from leakywire.main import DiscretizationConfig as DiscretizationConfig
from leakywire.main import HSSuiteConfig as HSSuiteConfig
from leakywire.main import LemmaSuiteConfig as LemmaSuiteConfig
from leakywire.main import LowerBoundSuiteConfig as LowerBoundSuiteConfig
from leakywire.main import OutputConfig as OutputConfig
from leakywire.main import PlaneConfig as PlaneConfig
from leakywire.main import PositivitySuiteConfig as PositivitySuiteConfig
from leakywire.main import RunConfig as RunConfig
from leakywire.main import SpectrumConfig as SpectrumConfig
from leakywire.main import TraceConfig as TraceConfig
from leakywire.main import VerifyConfig as VerifyConfig
from leakywire.spectral import Coupling as Coupling
