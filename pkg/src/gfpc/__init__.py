"""Structure-preserving ETDRK predictor-corrector solvers for Allen-Cahn and Cahn-Hilliard flows."""

from .spectral import Field, FourierMultiplier, Grid, GridMismatchError
from .models import (
    EnergyForm,
    FlowSpec,
    Mobility,
    PotentialKind,
    PotentialModel,
    UnsupportedEnergyForm,
    energy,
)
from .etdrk import (
    BlowUpError,
    ExponentialTableau,
    certify_assumption_A,
    check_order_conditions,
    etdrk_step,
    phi_eval,
    tableau_catalog,
)
from .correctors import (
    BoundCorrectorConfig,
    CorrectorFailure,
    EnergyCorrectorConfig,
    SchemeConfig,
    StepReport,
    bound_project,
    energy_project,
    step_pc,
    step_pcc,
    step_pcc_prime,
    step_plain,
)

__version__ = "0.1.0"
