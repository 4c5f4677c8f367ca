"""Convolutional beamforming on full and sparse linear arrays."""

from .apodization import desired_weights, modified_weights
from .beamform import (
    ChannelData,
    FilterSpec,
    ImagingConfig,
    Method,
    beamform_line,
    coarray_convolve_direct,
    coarray_convolve_fft,
    compute_delays,
    u_transform,
)
from .beampattern import AngularGrid, BeamPattern, bp_weighted, first_zero, lobe_metrics
from .errors import InvalidArgument, NoNontrivialDivisor, NotFound, UnreachablePosition
from .geometry import (
    PositionSet,
    SparseDesign,
    Variant,
    build_design,
    build_scoba,
    build_scobar,
    intrinsic_apodization,
    make_ula,
    minimize_aperture,
    optimize_scoba,
    optimize_scobar,
    sumset,
)
from .imaging import BModeImage, Circle, contrast_ratio, envelope, form_image
from .simulate import Phantom, PulseSpec, generate_channel_data, make_cyst_phantom, synth_pulse

__version__ = "0.1.0"
