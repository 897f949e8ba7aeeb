"""Mass-lumped localized multiscale solver for heterogeneous acoustic waves.

Offline, a localized orthogonal-decomposition basis with a diagonal
(mass-lumped) coarse mass matrix is built from fine-level coefficients;
online, a fully explicit leapfrog loop advances the wave equation without any
linear solves. See README.md for the experiment harness and file formats.
"""

from .grid import MeshLevel, PatchIndexSet, build_level, element_patch, refine_map
from .coeff import (CoefficientField, constant_field, load_field, make_field,
                    random_field, rescale_field, save_field, structured_field,
                    values_on_fine)
from .assembly import (FemOperatorSet, NormSet, assemble_lumped_mass,
                       assemble_mass, assemble_stiffness, build_fem_ops,
                       nodal_function, norms)
from .interp import InterpOperator, build_interpolator, local_projection
from .lod import (MultiscaleBasis, build_basis, decay_study, element_corrector,
                  load_basis, lumped_apply, save_basis)
from .dynamics import (CFLViolationError, InstabilityError, SeparableForcing,
                       Snapshot, TimeGrid, WaveTrajectory, cfl_dt,
                       discrete_energy, leapfrog_consistent, leapfrog_lumped)
from .metrics import ErrorRecord, attach_eoc, dt_l2_error, eoc, linf_h1_error
from .harness import (ExperimentConfig, ExperimentReport, TimingRow,
                      emit_report, example1_config, example2_config,
                      example3_config, run_example1, run_example2,
                      run_example3, run_report, timing_study)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
