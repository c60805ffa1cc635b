from __future__ import annotations

from .birman_schwinger import BSMatrix as BSMatrix
from .birman_schwinger import Discretization as Discretization
from .birman_schwinger import assemble_B as assemble_B
from .birman_schwinger import assemble_Q as assemble_Q
from .birman_schwinger import assemble_T as assemble_T
from .birman_schwinger import discretize as discretize
from .birman_schwinger import lower_bound_check as lower_bound_check
from .birman_schwinger import resolvent_block as resolvent_block
from .birman_schwinger import top_eigenpairs as top_eigenpairs
from .geometry import ArcLengthCurve as ArcLengthCurve
from .geometry import check_asymptotic_condition as check_asymptotic_condition
from .geometry import check_bilipschitz as check_bilipschitz
from .geometry import reparametrize_arclength as reparametrize_arclength
from .geometry import shifted_curve_point as shifted_curve_point
from .kernels import KernelParams as KernelParams
from .kernels import apply_t as apply_t
from .kernels import b_kernel as b_kernel
from .kernels import green3d as green3d
from .kernels import green_convolution as green_convolution
from .kernels import t_symbol as t_symbol
from .main import LeakyWireRunner as LeakyWireRunner
from .main import RunConfig as RunConfig
from .registry import curve_registry as curve_registry
from .spectral import BoundState as BoundState
from .spectral import Coupling as Coupling
from .spectral import dispersion as dispersion
from .spectral import eigenfunction as eigenfunction
from .spectral import find_bound_states as find_bound_states
from .spectral import threshold as threshold
from .spectral import verify_boundary_condition as verify_boundary_condition
from .trace import block_term as block_term
from .trace import cancellation_check as cancellation_check
from .trace import cutoff_trace as cutoff_trace
from .trace import hs_norm_B as hs_norm_B
from .trace import trace_bound_report as trace_bound_report

try:
    from . import configs as configs
except ImportError:
    pass
