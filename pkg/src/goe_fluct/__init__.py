"""Monte Carlo laboratory for eigenvalue fluctuations of GOE-valued Gaussian processes."""

__version__ = "0.1.0"

from goe_fluct._backend import NAME as backend  # noqa: E402
from goe_fluct.covariance import (  # noqa: E402
    Brownian,
    FractionalBrownian,
    OrnsteinUhlenbeck,
    Tabulated,
    TimeGrid,
    gram_factor,
    model_from_dict,
)
from goe_fluct.ensemble import (  # noqa: E402
    GoePath,
    PackedSymmetric,
    sample_correlated_goe_pair,
    sample_goe_path,
    sample_standard_goe,
)
from goe_fluct.kernel import (  # noqa: E402
    Normalization,
    Variant,
    limiting_cov_quadrature,
    limiting_cov_series,
    pastur_shcherbina_cov,
)
from goe_fluct.spectral import (  # noqa: E402
    eigen_decompose,
    eigenvalues,
    linear_statistic,
    parse_test_function,
)

__all__ = [
    "backend",
    "Brownian",
    "FractionalBrownian",
    "OrnsteinUhlenbeck",
    "Tabulated",
    "TimeGrid",
    "gram_factor",
    "model_from_dict",
    "GoePath",
    "PackedSymmetric",
    "sample_correlated_goe_pair",
    "sample_goe_path",
    "sample_standard_goe",
    "Normalization",
    "Variant",
    "limiting_cov_quadrature",
    "limiting_cov_series",
    "pastur_shcherbina_cov",
    "eigen_decompose",
    "eigenvalues",
    "linear_statistic",
    "parse_test_function",
]
