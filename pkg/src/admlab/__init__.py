"""admlab: numerical laboratory for admissibility of control and
observation operators for C0-semigroups."""

from .admissibility import (
    NormBracket,
    ZeroClassVerdict,
    c_adm_norm,
    input_map,
    input_norm,
    output_map,
    output_norm,
    semivariation_chain_check,
    semivariation,
    variation,
    windowed_output_norm,
    zero_class_classify,
)
from .duality import (
    DualityReport,
    check_c_adm_duality,
    check_control_duality,
    check_observation_duality,
)
from .errors import ConfigError, InvalidInputError, SingularityError
from .grid import (
    GridFunction,
    Partition,
    StepFunction,
    continuous_interpolant,
    integrate_curve,
    lp_norm,
)
from .measures import (
    BorelMeasure,
    BVFunction,
    conv_reflect,
    derivative_measure,
    detect_atoms,
    total_variation,
)
from .scenarios import (
    Scenario,
    ShiftExampleConfig,
    ShiftExampleReport,
    run_scenario,
    run_shift_example,
)
from .semigroups import (
    ControlOperator,
    ObservationOperator,
    SemigroupModel,
    bounded_control,
    control_from_bv,
    matrix_model,
    random_nilpotent_model,
    sample_domain_states,
    shift_left_sun,
    shift_right_l1,
    sun_dual,
)

__version__ = "0.1.0"
