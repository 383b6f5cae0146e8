"""Bubble concentration for the Navier bilaplacian on a ball with a small
potential: constants, radial solvers, Robin function, bubble energies, a
constrained minimizer and fits of the limiting laws."""

from .asymptotics import (FitResult, InsufficientWindow, SignCheck, SweepRecord,
                          concentration_sign_check, fit_blowup_laws, fit_gap_law, sweep)
from .bubblefun import (BubbleTerms, DomainError, ExpansionReport, LambdaStar, PotentialSpec,
                        best_bubble, bubble_terms, expansion_report, lambda_star, scale_objective,
                        log_lambda_star, log_upper_bound_prediction, phi_n, quotient,
                        upper_bound_prediction)
from .dimconsts import (ConstantReport, DimParams, make_dims, sobolev_quotient_quadrature,
                        verify_integral_constants)
from .greenrobin import (CrossCheckError, ProjectionBundle, RobinValue, bubble,
                         project_bubble, robin_center, robin_offcenter, robin_scan)
from .minimizer import (DecompositionFit, MinimizerOptions, MinimizerResult,
                        coercivity_check, el_residual, fit_decomposition, minimize_quotient)
from .radial import (RadialField, RadialGrid, SolverError, build_grid, integrate,
                     laplacian_radial, solve_navier_bilaplacian, solve_poisson_radial)

__version__ = "0.1.0"
