from gaussmap.render.grad_engine import ParamGrads, ScreenGradAccumulator, backward, backward_from_image_grad, loss, loss_and_grad
from gaussmap.render.sh_radiance import eval_sh_color, eval_sh_colors, sh_basis, view_direction
from gaussmap.render.splat_render import (
    Projection,
    RenderOutput,
    RenderSettings,
    Splat2D,
    depth_order,
    project_gaussian,
    project_gaussians,
    render,
)
from gaussmap.render.ssim import ssim

__all__ = [
    "ParamGrads",
    "Projection",
    "RenderOutput",
    "RenderSettings",
    "ScreenGradAccumulator",
    "Splat2D",
    "backward",
    "backward_from_image_grad",
    "depth_order",
    "eval_sh_color",
    "eval_sh_colors",
    "loss",
    "loss_and_grad",
    "project_gaussian",
    "project_gaussians",
    "render",
    "sh_basis",
    "ssim",
    "view_direction",
]
