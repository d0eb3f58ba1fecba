"""Code-switching speech recognition with a language-biased RNN transducer."""

__version__ = "0.1.0"
