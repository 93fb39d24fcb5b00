"""tasktree: behavior-tree orchestration for natural-language robot tasking."""

__version__ = "0.1.0"
