class ConfigError(ValueError):
    """Invalid solver configuration or problem data."""


class BlowUp(FloatingPointError):
    def __init__(self, step, what="state"):
        super().__init__(f"non-finite {what} coefficients at step {step}")
        self.step = step
        self.what = what


class EstimateViolation(AssertionError):
    def __init__(self, which, lhs, rhs):
        super().__init__(f"a priori estimate {which} violated: {lhs!r} > {rhs!r}")
        self.which = which
        self.lhs = lhs
        self.rhs = rhs
