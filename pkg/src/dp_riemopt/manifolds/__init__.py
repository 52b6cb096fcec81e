from .base import (
    DEFAULT_TOLERANCES,
    ConfigurationError,
    DomainError,
    DomainProfile,
    Manifold,
    ManifoldDescriptor,
    ManifoldPoint,
    TangentVector,
    Tolerances,
    curvature_constant,
    dist,
    egrad_to_rgrad,
    exp_map,
    geodesic_average_step,
    inner,
    log_map,
    metric_tensor,
    norm,
    unvectorize,
    vectorize,
)
from .spd import (
    SPD,
    FrechetObjective,
    SpdKernelCache,
    frechet_lipschitz,
    frechet_loss,
    frechet_rgrad,
    spd_expm,
    spd_invsqrtm,
    spd_logm,
    spd_sqrtm,
)
from .sphere import PcaObjective, Sphere, pca_lipschitz_estimate, pca_loss, pca_rgrad
