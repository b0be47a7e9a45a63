from .matrices import (
    ABSORBED_SRW,
    ABSORBED_SRW_DIAGONAL,
    CONE_H,
    CONE_L,
    TWO_STATE_L,
    random_stochastic,
    random_monotone,
)
