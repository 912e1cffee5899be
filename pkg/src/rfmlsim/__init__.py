"""Adversarial evasion of raw-IQ modulation classifiers, evaluated with BER."""
__version__ = "0.1.0"
