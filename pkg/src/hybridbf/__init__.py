"""Hybrid analog/digital beamformer design for partially connected arrays."""

from .channel import (
    ArrayGeometry,
    ChannelFormatError,
    ChannelRealization,
    PathSet,
    array_response,
    export_channels,
    generate_geometric_channel,
    import_channels,
    mu_geometric_channel,
    realization_seed,
)
from .core import (
    AnalogBeamformer,
    BisectionError,
    DigitalPrecoder,
    HybridBeamformer,
    PartitionSpec,
    assemble_analog,
    bisect_multiplier,
    effective_precoder,
    initial_beamformer,
    transmit_power,
)
from .mu import digital_mu_wmmse, digital_mu_zf, mu_subarray_zf, solve_mu_fa_wmmse, solve_mu_sa_wmmse
from .solver import SolverConfig, SolverOutcome, waterfill
from .su import (
    analog_single_stream,
    digital_su_wmmse,
    digital_svd_baseline,
    solve_fa_wmmse,
    solve_sa_wmmse,
    txrx_zf,
)

__version__ = "0.1.0"
