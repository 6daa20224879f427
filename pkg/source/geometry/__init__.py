# geometry package init
from .frenet import (
    FrenetPose,
    OutOfDomainError,
    PathError,
    ReferencePath,
    build_reference_path,
    cart_to_frenet,
    frenet_to_cart,
)
