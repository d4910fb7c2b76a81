"""Harmonic GP priors for polyphonic pitch detection.

Learns Matern-spectral-mixture kernels from isolated notes in the frequency
domain, then transcribes mixtures into per-pitch activation curves and a
piano-roll via sparse variational inference over modulated GPs.
"""

from .kernels import (
    GramMatrix,
    LorentzianComponent,
    MsmKernel,
    build_gram,
    cosine_kernel,
    load_kernel,
    matern12,
    msm_eval,
    msm_spectral_density,
    save_kernel,
)
from .spectral_fit import (
    FitReport,
    MagnitudeSpectrum,
    fit_msm_frequency_domain,
    init_manual,
    magnitude_ft,
    refine_marginal_likelihood,
)
from .quadrature import (
    GaussHermiteRule,
    expect_loglik_1d_decomp,
    expect_loglik_2d,
    expect_sigmoid,
    expect_sigmoid_sq,
    gh_rule,
)
from .vgp import (
    ElboBreakdown,
    FitConfig,
    InducingSet,
    MarginalMoments,
    VariationalGaussian,
    VariationalState,
    elbo,
    elbo_and_grads,
    fit,
    kl_gaussian,
    predict_marginals,
)
from .models import (
    McConfig,
    ModelSpec,
    SourceDecomposition,
    build_loo_spec,
    decompose,
    default_activation_kernel,
    make_model,
    sigmoid_multi_point_loglik,
    sigmoid_point_loglik,
    softmax_point_loglik,
)
from .audio import (
    AudioClip,
    GroundTruthRoll,
    NoteSpec,
    load_wav,
    note_to_hz,
    save_wav,
    seven_event_sequence,
    synth_mixture,
    synth_note,
)
from .pipeline import (
    EvalResult,
    PianoRoll,
    TranscribeConfig,
    extract_roll,
    frame_f_measure,
    learn_kernel,
    transcribe,
    transcribe_loo_all,
)

__version__ = "0.1.0"
