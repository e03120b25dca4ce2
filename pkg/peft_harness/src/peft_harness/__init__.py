"""LoRA fine-tuning harness: train adapters on exported failure cases and
serve the tuned model behind the evaluation gateway's chat contract."""

__version__ = "0.1.0"

from peft_harness.config import LoraConfigRecord
from peft_harness.errors import HarnessError, TrainingError

__all__ = ["HarnessError", "LoraConfigRecord", "TrainingError", "__version__"]
