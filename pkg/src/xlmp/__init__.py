"""xlmp: randomized-Kaczmarz downlink precoding lab for subarray XL-MIMO."""

__version__ = "0.1.0"

from .config import (  # noqa: F401
    CorrelationModel,
    CorrelationSpec,
    Normalization,
    SystemConfig,
)
from .channel import (  # noqa: F401
    ChannelRealization,
    ChannelSampler,
    VRMask,
    build_correlation,
    corrupt_csi,
    effective_covariance,
    sample_channel,
    sample_vr,
)
from .kaczmarz import (  # noqa: F401
    KaczmarzRun,
    SelectionMode,
    augmented_matrix,
    convergence_bound,
    exact_weights,
    normalized_min_gain,
    rka_solve,
    rka_solve_block,
    rka_step,
    selection_probs,
)
from .precoding import (  # noqa: F401
    Precoder,
    PrecoderMethod,
    build_all_precoders,
    rka_precoder,
    rzf_direct,
)
from .metrics import (  # noqa: F401
    BerEstimate,
    MetricsReport,
    ber_mc,
    complexity_count,
    nmse,
    sinr_hardening,
    sum_se,
)
from .harness import (  # noqa: F401
    ExperimentSpec,
    Scenario,
    SpecError,
    parse_spec,
    run_experiment,
    spec_to_json,
    substream,
)
