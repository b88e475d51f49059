"""Exception types that the CLI maps to categorized exit codes."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class CorpusError(ValueError):
    """Malformed corpus, vocabulary, or dataset file."""


class BudgetError(ValueError):
    """An exact-enumeration request exceeds the sequence budget."""


class DivergenceError(RuntimeError):
    """Training energies blew past the divergence bound; the run is aborted."""

    def __init__(self, step: int, mean_abs_energy: float, bound: float):
        self.step = step
        self.mean_abs_energy = mean_abs_energy
        self.bound = bound
        super().__init__(
            f"training diverged at step {step}: mean |energy| = "
            f"{mean_abs_energy:.6g} exceeds bound {bound:.6g}"
        )
