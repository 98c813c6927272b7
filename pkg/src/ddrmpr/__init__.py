"""Phase retrieval toolkit: alternating projections and diffusion posterior sampling."""

from .alternating import (
    ConstraintSet,
    HioParams,
    RandomInitParams,
    ap_general_run,
    er_run,
    fourier_projection,
    hio_run,
    random_init,
    residual,
)
from .ddrm import (
    DdrmState,
    NoiseSchedule,
    SamplerConfig,
    epsilon_estimate,
    equivalence_report,
    run_sampler,
    schedule_linear_vp,
    simplified_step,
    spectral_init,
    spectral_step,
)
from .denoisers import DenoiseRequest, DenoiserHandle, denoise, denoise_batch, make_denoiser
from .fields import (
    ComplexField,
    RealImage,
    SupportMask,
    dft2_unitary,
    idft2_unitary,
    magnitude,
    pad_to_oversampled,
)
from .forward import MeasurementSet, intensity, simulate, simulate_channels
from .linops import (
    CgOptions,
    LinearOperator,
    make_fourier_operator,
    make_random_transmission_operator,
    pinv_apply,
    projector_range_rows,
)
from .metrics import Alignment, align_ambiguities, psnr, ssim
from .pipeline import (
    GridSpec,
    PrPipelineConfig,
    average_samples,
    ddrm_pr_general_reconstruct,
    ddrm_pr_reconstruct,
    grid_search,
)

__version__ = "0.1.0"
