"""Bit-interleaved coded multiple beamforming over distributed mm-Wave MIMO channels."""

__version__ = "0.1.0"

from .analysis import (BerCurve, BoundParams, GammaApprox, ber_union_bound, channel_energy,  # noqa: E402
                       diversity_gain, fit_diversity_slope, gamma_approx_mu, gamma_approx_su, pep_bound)
from .beamforming import BeamformerSet, MuBeamformerSet, hybrid_bd_mu, svd_beamformers_su  # noqa: E402
from .channel import (ChannelRealization, FadingProfile, PathSet, SystemGeometry,  # noqa: E402
                      assemble_channel, draw_paths, realize, subchannel_matrix, theoretical_rank,
                      ula_response)
from .convcode import CodeSpec, conv_encode, distance_spectrum, viterbi_decode  # noqa: E402
from .interleaver import InterleaverPlan, build_interleaver, validate_interleaver  # noqa: E402
from .linksim import FrameResult, SimConfig, run_frame, sweep  # noqa: E402
from .modulation import ModulationSpec, get_modulation, map_symbols, ml_bit_metric  # noqa: E402
