class ConfigurationError(ValueError):
    """Invalid geometry, grid or run configuration."""


class NumericalStabilityError(RuntimeError):
    """Propagation produced non-finite amplitudes."""

    def __init__(self, step, z, max_abs_potential):
        self.step = step
        self.z = z
        self.max_abs_potential = max_abs_potential
        super().__init__(
            f"non-finite amplitudes at step {step} (z = {z:.4f} A); "
            f"max |U| encountered = {max_abs_potential:.4g} eV"
        )
