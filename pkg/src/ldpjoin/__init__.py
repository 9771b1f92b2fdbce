"""Join-size estimation under local differential privacy with fast-AGMS sketches."""

from ldpjoin.baselines import KrrParams, krr_calibrate, krr_join_estimate, krr_perturb, krr_perturb_batch
from ldpjoin.client import (
    FapMode,
    PerturbedReport,
    client_perturb,
    fap_perturb,
    fap_perturb_batch,
    perturb_batch,
)
from ldpjoin.fagms import FagmsSketch, fagms_join, fagms_sketch, true_join_size
from ldpjoin.hashing import HashFamily, derive_family, hadamard_entry, hadamard_transform
from ldpjoin.multiway import PrivateSketch2D, chain_join_est, prisk_build_2d, true_chain_join
from ldpjoin.params import SketchParams
from ldpjoin.server import (
    FrequentItemSet,
    JoinEstimate,
    PrivateSketch,
    estimate_frequency,
    find_frequent_items,
    join_est,
    ldp_join_sketch,
    ldp_join_sketch_plus,
    median_join,
    merge,
    prisk_build,
)

__version__ = "0.1.0"
