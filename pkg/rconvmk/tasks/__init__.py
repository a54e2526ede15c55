"""
Workflows run by the ``rcmk`` command
"""
from .context import RunContext
from .training_tasks import run_eval, run_train
from .robustness_tasks import run_attack, run_corrupt
from .verification_tasks import run_gradcheck, run_inspect

__all__ = ['RunContext', 'run_train', 'run_eval', 'run_attack', 'run_corrupt', 'run_gradcheck', 'run_inspect']
