import os
from pathlib import Path
from dotenv import load_dotenv

# ============================================================================
# Path Configuration
# ============================================================================
PROJECT_ROOT = Path(__file__).resolve().parent
PACKAGE_DIR = PROJECT_ROOT / "gaussmap"

# Load .env from project root
_ENV_FILE = PROJECT_ROOT / ".env"
if _ENV_FILE.exists():
    load_dotenv(_ENV_FILE)

# ============================================================================
# Output Configuration
# ============================================================================
_OUTPUT_DIR_RAW = os.getenv("GAUSSMAP_OUTPUT_DIR", "runs")
if Path(_OUTPUT_DIR_RAW).is_absolute():
    OUTPUT_DIR = Path(_OUTPUT_DIR_RAW)
else:
    OUTPUT_DIR = (PROJECT_ROOT / _OUTPUT_DIR_RAW).resolve()

TRAIN_LOG_NAME = os.getenv("GAUSSMAP_TRAIN_LOG", "train_log.jsonl")
RUN_SUMMARY_NAME = os.getenv("GAUSSMAP_RUN_SUMMARY", "run_summary.json")

# ============================================================================
# Training Defaults (TOML config values override these)
# ============================================================================
DEFAULT_SEED = int(os.getenv("GAUSSMAP_SEED", "0"))
CHECKPOINT_INTERVAL = int(os.getenv("GAUSSMAP_CHECKPOINT_INTERVAL", "1000"))
EVAL_INTERVAL = int(os.getenv("GAUSSMAP_EVAL_INTERVAL", "500"))

# ============================================================================
# Evaluation Defaults
# ============================================================================
EMD_MAX_POINTS = int(os.getenv("GAUSSMAP_EMD_MAX_POINTS", "2048"))
FSCORE_TAU = float(os.getenv("GAUSSMAP_FSCORE_TAU", "0.05"))

# ============================================================================
# Processing Configuration
# ============================================================================
VERBOSE_LOGGING = os.getenv("VERBOSE_LOGGING", "false").lower() in ("true", "1", "yes")
RUN_BENCHMARK = os.getenv("GAUSSMAP_RUN_BENCHMARK", "false").lower() in ("true", "1", "yes")


# ============================================================================
# Validation
# ============================================================================
def validate_config() -> list:
    """Validate that environment-level settings are usable."""
    errors = []

    if CHECKPOINT_INTERVAL < 0:
        errors.append(f"GAUSSMAP_CHECKPOINT_INTERVAL must be >= 0, got {CHECKPOINT_INTERVAL}")

    if EVAL_INTERVAL < 0:
        errors.append(f"GAUSSMAP_EVAL_INTERVAL must be >= 0, got {EVAL_INTERVAL}")

    if EMD_MAX_POINTS < 1:
        errors.append(f"GAUSSMAP_EMD_MAX_POINTS must be >= 1, got {EMD_MAX_POINTS}")

    if FSCORE_TAU <= 0:
        errors.append(f"GAUSSMAP_FSCORE_TAU must be > 0, got {FSCORE_TAU}")

    if OUTPUT_DIR.exists() and not OUTPUT_DIR.is_dir():
        errors.append(f"Output path exists and is not a directory: {OUTPUT_DIR}")

    return errors


def print_config_summary():
    """Print a summary of the current configuration."""
    print("=" * 80)
    print("Configuration Summary")
    print("=" * 80)
    print(f"Project Root: {PROJECT_ROOT}")
    print(f"Output Directory: {OUTPUT_DIR}")
    print(f"Default Seed: {DEFAULT_SEED}")
    print(f"Checkpoint Interval: {CHECKPOINT_INTERVAL}")
    print(f"Eval Interval: {EVAL_INTERVAL}")
    print(f"EMD Max Points: {EMD_MAX_POINTS}")
    print(f"F-score Tau: {FSCORE_TAU} m")
    print("=" * 80)

    errors = validate_config()
    if errors:
        print("\n⚠️  Configuration Errors:")
        for error in errors:
            print(f"  - {error}")
        print()


if __name__ == "__main__":
    print_config_summary()
