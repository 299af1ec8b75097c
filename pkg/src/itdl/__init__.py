"""Information-theoretic dictionary learning for classification.

Greedy selection of compact, discriminative and reconstructive atoms from
an initial dictionary, followed by gradient-ascent atom updates on the
quadratic mutual information between sparse codes and class labels.
"""

from .dataset import (
    BinaryRelabeling,
    Dataset,
    LoadError,
    binary_labels,
    load_csv,
    load_mask,
    mask_pixels,
    save_csv,
    save_mask,
    split,
    synth_gaussian_classes,
)
from .sparse_coding import (
    Dictionary,
    Selection,
    SparseCodes,
    code_ls,
    ksvd_init,
    load_dictionary,
    load_matrix,
    load_selection,
    omp,
    omp_codes,
    pinv,
    rmse,
    save_dictionary,
    save_matrix,
    save_selection,
    somp,
)
from .info_measures import (
    GpModel,
    KdeConfig,
    ResidualModel,
    ascent_bandwidth,
    bandwidth_rule,
    bayes_bound,
    median_pairwise_distance,
    build_gp_model,
    class_entropy,
    gauss_kernel,
    gp_compact_gain,
    gp_compact_gains,
    gp_total_mi,
    kde_class_density,
    kl_qd_check,
    mi_codes_labels,
    qmi,
    qmi_grad_codes,
    qmi_grad_phi,
    qmi_grad_x,
    recon_gain,
)
from .itds import (
    SelectionMode,
    SelectionResult,
    SelectionWeights,
    WeightsError,
    estimate_lambdas,
    select_dedicated,
    select_shared,
    selection_report,
)
from .itdu import (
    ClassUpdateResult,
    UpdateState,
    backtrack_step,
    renormalize_atoms,
    update_all_classes,
    update_dictionary,
    update_report,
)
from .classify import (
    EvalReport,
    LinearModel,
    build_features,
    evaluate,
    predict,
    reconstruct_masked,
    train_linear,
)

__version__ = "0.1.0"
