"""Digital over-the-air computation of symmetric functions.

Design modulation vectors whose superposed symbols decode directly to a
function value, then benchmark them against AirComp and OFDMA.
"""

from .baselines import aircomp_estimate, nomographic_map, ofdma_estimate
from .channel import ChannelConfig, mac_transmit, power_control, sigma_from_snr, trial_rng
from .design import (
    InfeasibleDesign,
    ModulationDesign,
    assemble_problem,
    design_modulation,
    extract_modulation,
    load_design,
    save_design,
    solve_relaxation,
    verify_exact_feasibility,
)
from .functions import (
    FunctionSpec,
    NonSymmetricFunction,
    build_selection_matrix,
    enumerate_multiset_classes,
    make_function,
    range_set,
)
from .harness import ExperimentConfig, NmseReport, nmse, preset, run_monte_carlo
from .modem import Encoder, Quantizer, build_decoder_table, decode

__version__ = "0.1.0"
