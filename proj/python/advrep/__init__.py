from ._core import (
    ContractError,
    DimensionError,
    Error,
    LabelError,
    MissingArtifactError,
    NumericalError,
    ParseError,
    calinski_harabasz,
    effective_config,
    exact_shapley,
    kernel_shap,
    leiden,
    lowess,
    rb_quality,
    run_stage,
    silhouette,
    synth,
    violin_transform,
)

STAGES = ("synth", "train", "attribute", "embed", "score", "leiden", "stratify", "report")


def run_all(config, out, seed=None):
    for stage in STAGES:
        run_stage(stage, config, out, seed)
