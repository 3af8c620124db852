"""Limited-tilt parallel-beam tomography toolkit.

Builds exact-intersection system matrices for tilt-series geometries,
simulates equally-sloped and equally-angled acquisitions over a missing
wedge, and reconstructs with ordered-subset SART or its adaptive
dictionary-regularized extension.
"""

from .adsir import AdsirConfig, adsir, adsir_image_step, adsir_objective, objective_terms
from .dictlearn import (
    Dictionary,
    PatchSet,
    SparseCode,
    extract_patches,
    omp,
    omp_batch,
    patch_adjoint_accumulate,
    train_dictionary,
)
from .experiment import ExperimentPlan, format_report, report, run_experiment
from .geometry import (
    AngleSet,
    SamplingMode,
    ea_angles,
    es_angles,
    es_slopes,
    restrict_to_tilt_range,
    subsample_with_endpoints,
)
from .metrics import SsimParams, mean_metric_over_stack, rmse, ssim
from .phantom import AtomSpec, NoiseSpec, default_phantom, make_atom_phantom, simulate
from .projector import (
    ImageGrid,
    Sinogram,
    SparseRow,
    SystemMatrix,
    back_project,
    forward_project,
    row_sums,
    system_row,
)
from .sart import SartConfig, SubsetPartition, circle_support, os_sart, os_sart_step, partition_views

__version__ = "0.1.0"
