"""Spin-glass overlap-structure toolkit.

Exact-enumeration and Monte Carlo machinery for Edwards-Anderson and
Sherrington-Kirkpatrick models, plus statistical tests of the structural
identities satisfied by disorder-averaged overlap laws.
"""

from .disorder import (CouplingField, DistributionSpec, Perturbation,
                       perturb_couplings, sample_couplings, sk_edges)
from .errors import SpinGlassError, ValidationError
from .gibbs import (ENUMERATION_CAP, GibbsTable, ReplicaEnsemble, ea_energy,
                    enumerate_gibbs, exact_gibbs, sample_replicas, sk_energy,
                    window_free_energy)
from .harness import ResultRecord, RunConfig, emit_report, run_experiment
from .lattice import (Lattice, Window, build_lattice, full_window,
                      translate_couplings, translate_spins, window_edges,
                      window_vertices)
from .metastate import (j_independence_test, metastate_sweep,
                        sk_equivalence_test)
from .overlap import OverlapMatrix, edge_overlap, overlap_matrix, spin_overlap
from .rost import (SamplingAtoms, congruence_collapse, effective_rank,
                   exchangeability_test, gram_factorize)
from .stability import (StabilityReport, beta_shift_identity_test,
                        covariance_identity_check, local_stability_test,
                        stochastic_stability_test)

__version__ = "0.1.0"
