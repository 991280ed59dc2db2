"""Scene prior: dataset generation, two-stage training, synthesis, reconstruction and metrics."""

from ._sceneprior import (
    Model,
    SceneError,
    Trainer,
    box_iou_3d,
    category_kl,
    chamfer_distance,
    compute_metrics,
    default_dataset_spec,
    default_train_config,
    generate_dataset,
    gradcheck,
    hungarian,
    render_silhouette,
    slerp,
)

__all__ = [
    "Model",
    "SceneError",
    "Trainer",
    "box_iou_3d",
    "category_kl",
    "chamfer_distance",
    "compute_metrics",
    "default_dataset_spec",
    "default_train_config",
    "generate_dataset",
    "gradcheck",
    "hungarian",
    "render_silhouette",
    "slerp",
]
