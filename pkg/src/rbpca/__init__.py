"""Process monitoring with PCA on sparse random Bernoulli features.

Samples are rows: training data has shape ``(n, D)``. Typical use::

    from rbpca import gen_numerical_example, fit_static
    det = fit_static(gen_numerical_example(1000, seed=0).X)
    q, alarm = det.score_online(x)
"""

from .config import RunConfig, derive_seed
from .datasets import (
    SampleStream,
    gen_numerical_example,
    inject_fault1,
    inject_fault2,
    load_labeled_csv,
    write_csv,
    zscore_apply,
    zscore_fit,
)
from .dynamic import (
    MovingWindowState,
    TwoDModel,
    Verdict,
    fit_2d,
    fit_dynamic,
    lag_embed,
    mw_fit,
    mw_step,
    q2d_statistic,
    screen_dissimilar,
    screen_successive,
)
from .evaluation import (
    KernelPCADetector,
    MonitoringReport,
    bench_modeling,
    exact_kpca_baseline,
    fdr_far,
    make_monitor,
    monte_carlo,
)
from .exceptions import DataError, NumericalError, ParameterError
from .features import (
    BernoulliFeatureMap,
    FourierFeatureMap,
    GaussianKernelParams,
    approx_kernel,
    embed_batch,
    exact_gaussian_kernel,
    new_bernoulli_map,
    new_fourier_map,
    spectral_error,
    spectral_error_bound,
)
from .pca import Detector, PcaModel, fit_pca, fit_static, kde_threshold, q_statistic, score_online
from .persistence import load_model, save_model

__version__ = "0.1.0"
