"""Stationary equilibria of continuous-time finite mean field games and their robustness."""

from .equilibrium import (
    Equilibrium,
    EquilibriumSet,
    find_all_equilibria,
    find_deterministic_equilibria,
    find_mixed_equilibria,
    hausdorff,
    set_distance,
    verify_equilibrium,
)
from .essentiality import (
    EssentialityReport,
    PerturbationConstants,
    Verdict,
    certified_delta,
    check_characterization,
    check_unique_criterion,
    classify,
    essential_stationary_check,
    perturbation_constants,
    strategy_persistence_radius,
)
from .fixtures import load_fixture
from .io import load_model, load_model_file, save_model, save_model_file
from .mdp import (
    monte_carlo_value,
    optimal_deterministic_set,
    optimal_value,
    value_gap,
    value_of_deterministic,
    value_of_strategy,
)
from .model import GameModel, Polynomial, effective_generator, game_distance, validate
from .probing import FamilySpec, ensemble_genericity_study, probe, sample_perturbed_game
from .stationary import fixed_point_jacobian, is_irreducible, stationary_points, x_map

__version__ = "0.1.0"
