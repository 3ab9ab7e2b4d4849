"""Raster-to-bezigon vectorization by direct energy minimization."""
from .energy import (PAPER_WEIGHTS, EnergyBreakdown, EnergyContext, EnergyWeights, VectorShape, data_energy,
                     data_gradient, e_apt, e_hpt, e_lpt, e_spt, prior_gradient, total_energy)
from .geometry import Bezigon, IntersectionPair, arc_length, eval_bezigon, flatten, joint_tangents, self_intersections
from .imaging import (ImageDecodeError, RasterImage, SvgParseError, VectorDocument, load_png, load_svg, psnr,
                      save_png, save_svg)
from .init import InitParams, fit_bezigon, initialize, segment_regions, trace_boundary
from .pipeline import render_document, render_shapes, vectorize
from .raster import (DomainError, RasterGrid, coverage, coverage_gradient, oracle_rasterize, rasterize,
                     reconstruct, wavelet_coefficients)
from .solver import SolverOptions, minimize, optimize_bezigon, optimize_color, optimize_piece

__version__ = "0.1.0"
