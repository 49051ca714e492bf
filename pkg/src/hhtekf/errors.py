"""Exception types shared across the analysis stages."""


class AnalysisError(Exception):
    """Base class for analysis failures. ``stage`` names the pipeline step."""

    stage = "analysis"

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return f"[{self.stage}] {super().__str__()}"


class ResidueReached(AnalysisError):
    """Raised by sifting when the input has too few extrema to form envelopes."""

    stage = "emd"


class NoOscillationDetected(AnalysisError):
    stage = "init"


class EkfDivergence(AnalysisError):
    stage = "ekf"

    def __init__(self, message, sample_index):
        super().__init__(f"{message} at sample {sample_index}")
        self.sample_index = sample_index
