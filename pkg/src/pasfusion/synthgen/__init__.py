from .generator import SynthSpec, generate_dataset, generate_pair, signal_flags

__all__ = ["SynthSpec", "generate_pair", "generate_dataset", "signal_flags"]
