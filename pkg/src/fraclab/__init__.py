"""fraclab: a desk-scale laboratory for fractional Brownian motion local
times, their spatial derivatives, and the high-frequency statistics that
estimate them.

Layout:

* :mod:`fraclab.fbm`         -- exact simulation and Gaussian linear algebra;
* :mod:`fraclab.kernels`     -- Hermite polynomials, mollifier derivatives,
                                the test-function catalogue and its moments;
* :mod:`fraclab.local_time`  -- the discrete / mollified / Fourier estimators
                                and the occupation measure;
* :mod:`fraclab.oracles`     -- quadrature oracles for moments, the existence
                                threshold probe, and covariance-bound audits;
* :mod:`fraclab.experiments` -- Monte Carlo experiments, rate fits, reports;
* :mod:`fraclab.cli`         -- the ``fraclab`` command.
"""

from .errors import (
    AccuracyError,
    CapabilityError,
    ConfigError,
    DomainError,
    EmbeddingError,
    IntegrabilityError,
    NumericalError,
    ResourceError,
)
from .fbm import (
    FbmPath,
    GaussianConditioning,
    Hurst,
    TimeGrid,
    conditional_variance,
    cov,
    cov_matrix,
    det_decomposition,
    increment_inner_product,
    load_path,
    save_path,
    simulate,
    subsample,
)
from .kernels import (
    HermitePoly,
    Kernel,
    KernelMoments,
    antiderivative,
    catalogue_kernel,
    compute_moments,
    hermite_eval,
    kernel_deriv,
    mollifier_deriv,
)
from .local_time import (
    DltEstimate,
    StatisticSpec,
    dlt_profile,
    fourier_dlt,
    g_statistic,
    mollified_dlt,
    occupation_time,
)
from .oracles import (
    MomentQuery,
    covariance_bound_audit,
    divergence_probe,
    dlt_first_moment,
    dlt_second_moment,
    gaussian_pair_moment,
    identity_audit,
)
from .experiments import (
    ExperimentConfig,
    RateFit,
    Report,
    emit,
    fit_rate,
    load_report,
    run_experiment,
)

__version__ = "0.1.0"
