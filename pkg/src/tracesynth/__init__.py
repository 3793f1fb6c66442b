"""Deep-Q-learning synthesis of high-coverage syscall traces for OS fuzzer seeds."""

__version__ = "0.1.0"
