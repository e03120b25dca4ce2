class HarnessError(Exception):
    """Base error for the fine-tuning harness."""


class TrainingError(HarnessError):
    """Training could not proceed (bad data, OOM, incompatible adapter)."""
