from gaussmap.evaluation.metrics import (
    PSNR_CAP_DB,
    StructureReport,
    chamfer,
    emd,
    fscore,
    gaussians_to_cloud,
    psnr,
    ssim,
    structure_report,
)

__all__ = [
    "PSNR_CAP_DB",
    "StructureReport",
    "chamfer",
    "emd",
    "fscore",
    "gaussians_to_cloud",
    "psnr",
    "ssim",
    "structure_report",
]
