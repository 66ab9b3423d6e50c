"""Inverse landscape genetics: fit parameterized landscape-graph edge
weights so that pairwise effective resistances match observed genetic
dissimilarities."""

from .errors import ConfigError, DataError, NumericError, ResistographError, SolverError
from .graph import Edge, EdgeFeatures, EdgeGraph, assemble_laplacian, build_grid_graph, derive_edge_features
from .ingest import (
    FstTable,
    LandscapeGrid,
    RasterLayer,
    build_landscape,
    load_ascii_grid,
    load_fst,
    resample,
    write_ascii_grid,
)
from .metrics import parameter_table, r_squared_linear_fit
from .objective import GradientReport, gradient, loss
from .optim import FitState, OptimConfig, fit, init_theta, nelder_mead_fit, rmsprop_step
from .resistance import (
    ResistanceSurface,
    SampleSet,
    SolveCache,
    batch_potentials,
    effective_resistance,
    resistance_surface,
    solve_psd,
)
from .synthetic import (
    SyntheticScenario,
    make_scenario,
    random_landscape,
    relative_parameter_error,
    sample_nodes,
    simulate_F,
    train_test_experiment,
)
from .weights import (
    ModelSpec,
    ParameterFloors,
    ThetaVector,
    edge_resistance,
    edge_weight,
    edge_weights,
    weight_jacobian,
)

__version__ = "0.1.0"
