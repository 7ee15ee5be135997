"""Simulation and verification toolkit for the Langevin process reflected
at a completely inelastic boundary.

The reflected process is built two independent ways: explicitly, by
reflecting the integrated driving path at its running infimum and excising
the pinned time (``reflection``), and directly, by time stepping the
constrained dynamics with end-of-step inelastic projection
(``integrator``).  The ``recovery`` module rebuilds the driving noise from
any solution plus an independent auxiliary Brownian path, which is the
executable form of uniqueness in law; ``counterexample`` constructs the
deterministic smooth force with two distinct solutions; ``stat_tests``
holds the statistical battery; ``runner`` ties everything into
reproducible gated experiments, exposed on the command line by ``cli``.
"""

from .errors import ConfigError, FitError, GateError, HorizonError, SimulationError
from .paths import (RngStream, SamplePath, TimeGrid, bridge_crossing_prob,
                    bridge_refine, sample_brownian, sample_langevin_pair)
from .reflection import (InfimumDecomposition, PathBundle, TimeChange,
                         build_time_change, decompose_infimum_set,
                         impulse_jump_path, reflect_construct, running_infimum,
                         verify_noise_recovery, verify_time_shift)
from .integrator import (ImpactEvent, IntegratorConfig, SolutionTrace,
                         detect_impacts, simulate_deterministic, simulate_sde)
from .recovery import (EpsilonSplice, RecoveryArtifacts, boundary_intervals,
                       build_recovery, epsilon_splice, first_passage,
                       verify_boundary_intervals, verify_solution_recovery)
from .counterexample import (CounterexampleSpec, PhiFunction, alpha_eval,
                             beta_eval, build_phi, candidate_solutions,
                             divergence, force, verify_inclusion)
from .stat_tests import (TestReport, brownian_battery, ks_one_sample,
                         ks_two_sample, zero_set_measure)

__version__ = "0.1.0"
