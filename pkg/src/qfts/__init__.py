"""Two-photon interference spectroscopy toolkit.

Forward model from a joint spectral density to HOM and NOON fringes, FFT and
fit-based reconstruction of the sum- and difference-frequency spectra, fringe
fitting, and a Monte Carlo of the pulsed coincidence-counting experiment.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    FormatError,
    NumericalError,
    QFTSError,
    ValidationError,
)
from .spectral_core import (  # noqa: E402
    DelayGrid,
    FrequencyGrid,
    FringePattern,
    Spectrum,
    fwhm,
    unit_convert,
)
from .jsa_models import (  # noqa: E402
    BiexcitonModelParams,
    GaussianModelParams,
    JointSpectralDensity,
    build_biexciton_jsd,
    build_gaussian_jsd,
    model_marginal,
)
from .interference import fringe_from_jsd, fringe_pattern, marginal_spectrum, with_visibility  # noqa: E402
from .reconstruction import (  # noqa: E402
    ReconstructionConfig,
    analytic_fit_spectrum,
    reconstruct_spectrum,
    spectral_metrics,
)
from .fitting import (  # noqa: E402
    FitReport,
    HomFitParams,
    NoonFitParams,
    evaluate_model,
    fit_envelope,
    fit_hom_dip,
    fit_noon_oscillation,
)
from .coincidence import (  # noqa: E402
    HistogramData,
    SourceConfig,
    corrected_coincidences,
    estimate_accidentals,
    scan_experiment,
    simulate_histogram,
)
